"""Non-neural radiogenomic pipeline for MGMT methylation prediction from
multi-parametric MRI: NIfTI-1 IO, size-safe preprocessing, radiomics,
segmentation loss/metric mathematics, classification metrics with
calibration, and a gradient-boosted fusion classifier."""

from .volume import Volume3D
from .nifti_io import NiftiHeader, CohortTable, read_nifti, write_nifti, read_cohort_csv
from .preprocess import SubjectBundle, CanonicalLabels, preprocess_subject
from .gbm import BoostedModel, GbmConfig, train_gbm
from .pipeline import PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "Volume3D",
    "NiftiHeader",
    "CohortTable",
    "read_nifti",
    "write_nifti",
    "read_cohort_csv",
    "SubjectBundle",
    "CanonicalLabels",
    "preprocess_subject",
    "BoostedModel",
    "GbmConfig",
    "train_gbm",
    "PipelineConfig",
    "__version__",
]
