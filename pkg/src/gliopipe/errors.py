"""Typed exceptions raised across the pipeline."""


class GliopipeError(Exception):
    """Base class for all pipeline errors."""


# --- NIfTI / CSV parsing ---

class BadMagic(GliopipeError):
    pass


class UnsupportedDatatype(GliopipeError):
    pass


class TruncatedData(GliopipeError):
    pass


class DimMismatch(GliopipeError):
    pass


class MissingColumn(GliopipeError):
    pass


class DuplicateId(GliopipeError):
    pass


# --- volume kernels ---

class DegenerateHistogram(GliopipeError):
    pass


class EmptyRegion(GliopipeError):
    pass


class NonPowerOfTwoDims(GliopipeError):
    pass


# --- preprocessing ---

class EmptyBrainMask(GliopipeError):
    pass


class EmptyTumor(GliopipeError):
    pass


class InvalidLabelValue(GliopipeError):
    pass


class NotNormalized(GliopipeError):
    pass


class GridMismatch(GliopipeError):
    pass


# --- features / classifier ---

class DimensionMismatch(GliopipeError):
    pass


class SingleClass(GliopipeError):
    pass


class NaNFeature(GliopipeError):
    pass


class ModelFormatError(GliopipeError):
    pass


class UnsupportedModelVersion(GliopipeError):
    pass


# --- metrics ---

class UndefinedAUC(GliopipeError):
    pass


class DegenerateLogits(GliopipeError):
    pass


# --- orchestration ---

class InvalidRatio(GliopipeError):
    pass


class ConfigError(GliopipeError):
    pass
