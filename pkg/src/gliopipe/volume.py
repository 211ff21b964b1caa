"""Core 3D grid type and shared numeric kernels.

Volumes are dense float32 arrays in (z, y, x) order with per-axis voxel
spacing in millimeters. Binary masks share the same grid and are boolean
arrays. All kernels are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateHistogram, EmptyRegion, NonPowerOfTwoDims

# 6-connected structuring element (faces only), used for morphology and
# hole filling; 26-connectivity is reserved for radiomics zone logic.
STRUCT_6 = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class Volume3D:
    """Scalar field on a regular grid: data[z, y, x], spacing (dz, dy, dx) mm."""

    data: np.ndarray
    spacing: tuple[float, float, float]

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("volume data must be 3-D")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("spacing components must be positive")
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.float32))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray, spacing=None) -> "Volume3D":
        return Volume3D(data, self.spacing if spacing is None else spacing)


def as_mask(arr: np.ndarray) -> np.ndarray:
    """Coerce an array to a boolean mask, rejecting non-binary values."""
    a = np.asarray(arr)
    if a.dtype != bool:
        uniq = np.unique(a)
        if not np.all(np.isin(uniq, (0, 1))):
            raise ValueError("mask values must be 0/1")
        a = a.astype(bool)
    return a


def resample(vol: Volume3D, target_dims: tuple[int, int, int], mode: str = "trilinear") -> Volume3D:
    """Resample to a new grid size; spacing scales by N/N' per axis.

    Source coordinates use pixel-center alignment, so identical target dims
    reproduce the input exactly. Out-of-range samples clamp to the edge.
    """
    if any(n < 1 for n in target_dims):
        raise ValueError("target dims must be >= 1 per axis")
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"unknown resample mode {mode!r}")
    src_dims = vol.dims
    if tuple(target_dims) == src_dims:
        return Volume3D(vol.data.copy(), vol.spacing)
    coords = np.meshgrid(
        *[
            (np.arange(nt) + 0.5) * (ns / nt) - 0.5
            for ns, nt in zip(src_dims, target_dims)
        ],
        indexing="ij",
    )
    order = 1 if mode == "trilinear" else 0
    out = ndimage.map_coordinates(vol.data, coords, order=order, mode="nearest")
    new_spacing = tuple(
        sp * ns / nt for sp, ns, nt in zip(vol.spacing, src_dims, target_dims)
    )
    return Volume3D(out.astype(np.float32), new_spacing)


def gaussian_smooth(vol: Volume3D, sigma_mm: float) -> Volume3D:
    """Separable Gaussian smoothing; sigma given in mm, kernel cut at 3 sigma."""
    if sigma_mm <= 0:
        raise ValueError("sigma must be positive")
    sigma_vox = [sigma_mm / s for s in vol.spacing]
    out = _gaussian_vox(vol.data, sigma_vox)
    return vol.with_data(out)


def gaussian_smooth_vox(data: np.ndarray, sigma_vox: float) -> np.ndarray:
    """Gaussian smoothing with sigma given directly in voxels."""
    return _gaussian_vox(np.asarray(data, dtype=np.float32), [sigma_vox] * 3)


def _gaussian_vox(data: np.ndarray, sigma_vox) -> np.ndarray:
    out = np.asarray(data, dtype=np.float64)
    for axis, sig in enumerate(sigma_vox):
        radius = int(np.floor(3.0 * sig))
        if radius < 1:
            continue  # kernel degenerates to identity
        x = np.arange(-radius, radius + 1, dtype=np.float64)
        kernel = np.exp(-0.5 * (x / sig) ** 2)
        kernel /= kernel.sum()
        out = ndimage.correlate1d(out, kernel, axis=axis, mode="nearest")
    return out.astype(np.float32)


def dilate(mask: np.ndarray) -> np.ndarray:
    """One dilation with the 6-connected structuring element."""
    return ndimage.binary_dilation(as_mask(mask), structure=STRUCT_6)


def erode(mask: np.ndarray) -> np.ndarray:
    """One erosion with the 6-connected structuring element."""
    return ndimage.binary_erosion(as_mask(mask), structure=STRUCT_6)


def otsu_threshold(vol: Volume3D | np.ndarray) -> float:
    """Threshold maximizing between-class variance over a 256-bin histogram."""
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    vals = data[np.isfinite(data)].ravel().astype(np.float64)
    lo, hi = vals.min(), vals.max()
    if hi <= lo:
        raise DegenerateHistogram("volume has a single distinct value")
    hist, edges = np.histogram(vals, bins=256, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    w = hist.astype(np.float64)
    total = w.sum()
    cum_w = np.cumsum(w)
    cum_m = np.cumsum(w * centers)
    mean_total = cum_m[-1] / total
    # between-class variance for a cut after bin t
    w0 = cum_w[:-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    m0 = np.where(w0 > 0, cum_m[:-1] / np.maximum(w0, 1), 0.0)
    m1 = np.where(w1 > 0, (cum_m[-1] - cum_m[:-1]) / np.maximum(w1, 1), 0.0)
    var_between = np.where(valid, w0 * w1 * (m0 - m1) ** 2, -1.0)
    t = int(np.argmax(var_between))
    del mean_total
    return float(edges[t + 1])


def fill_holes_and_close(mask: np.ndarray) -> np.ndarray:
    """Fill 6-connected background holes, then one morphological closing."""
    m = as_mask(mask)
    filled = ndimage.binary_fill_holes(m, structure=STRUCT_6)
    return ndimage.binary_erosion(
        ndimage.binary_dilation(filled, structure=STRUCT_6), structure=STRUCT_6
    )


def percentile(values: np.ndarray, p: float, mask: np.ndarray | None = None) -> float:
    """Linear-interpolation percentile over finite values, optionally masked."""
    vals = np.asarray(values, dtype=np.float64)
    if mask is not None:
        vals = vals[as_mask(mask)]
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise EmptyRegion("no finite values in region")
    return float(np.percentile(vals, p, method="linear"))


def fft3(vol: Volume3D | np.ndarray) -> np.ndarray:
    """Forward 3-D DFT; dims must be powers of two (caller pads/crops)."""
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    for n in data.shape:
        if n < 1 or (n & (n - 1)) != 0:
            raise NonPowerOfTwoDims(f"dim {n} is not a power of two")
    return np.fft.fftn(data.astype(np.float64))


def ifft3(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of fft3."""
    return np.fft.ifftn(spectrum)
