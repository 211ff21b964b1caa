"""Size-safe MRI preprocessing: bias correction, brain extraction, ROI
cropping, intensity standardization, grid harmonization, label
canonicalization, and soft tumor-probability channels.

Per-subject stages run in a fixed order:
bias -> brain extraction -> masking -> ROI crop -> standardization ->
grid harmonization -> label canonicalization -> soft maps -> 8-channel
assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBrainMask, EmptyRegion, EmptyTumor, GridMismatch, InvalidLabelValue, NotNormalized
from .volume import (
    Volume3D,
    as_mask,
    fill_holes_and_close,
    gaussian_smooth_vox,
    otsu_threshold,
    resample,
)
from . import volume as vc

VALID_LABELS = (0, 1, 2, 4)
MODALITY_ORDER = ("flair", "t1", "t1ce", "t2")
CHANNEL_ORDER = ("t1", "t1ce", "t2", "flair", "wt", "p_et", "p_tc", "p_wt")

DEFAULT_PAD = 12
DEFAULT_GRID = (160, 160, 160)
DEFAULT_N_MIN = 64
DEFAULT_CLAHE_CLIP = 0.01
DEFAULT_BIAS_SIGMA_MM = 25.0
DEFAULT_SOFT_SIGMA_VOX = 2.0


@dataclass(frozen=True)
class BoundingBox:
    """Per-axis inclusive (lo, hi) voxel indices in (z, y, x) order."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(l, h + 1) for l, h in zip(self.lo, self.hi))


@dataclass
class CanonicalLabels:
    """Nested binary tumor maps: et <= tc <= wt, bg = complement of wt."""

    et: np.ndarray
    tc: np.ndarray
    wt: np.ndarray
    bg: np.ndarray


@dataclass
class SubjectBundle:
    """Four co-registered modalities plus a BraTS label volume."""

    subject_id: str
    modalities: dict[str, Volume3D]
    labels: np.ndarray
    label_spacing: tuple[float, float, float]

    def validate(self) -> None:
        grids = {m: (v.dims, v.spacing) for m, v in self.modalities.items()}
        if set(grids) != set(MODALITY_ORDER):
            raise GridMismatch(f"expected modalities {MODALITY_ORDER}, got {sorted(grids)}")
        ref = next(iter(grids.values()))
        if any(g != ref for g in grids.values()):
            raise GridMismatch("modalities are not on a common grid")
        if self.labels.shape != ref[0]:
            raise GridMismatch("label grid does not match modality grid")


def validate_labels(labels: np.ndarray) -> np.ndarray:
    lab = np.asarray(labels)
    bad = np.setdiff1d(np.unique(lab), VALID_LABELS)
    if bad.size:
        raise InvalidLabelValue(f"label values {bad.tolist()} outside {VALID_LABELS}")
    return lab.astype(np.int16)


def correct_bias(vol: Volume3D, brain: np.ndarray, sigma_mm: float = DEFAULT_BIAS_SIGMA_MM) -> Volume3D:
    """Divide out a smooth multiplicative bias field estimated in log space.

    The field is a wide Gaussian smoothing (normalized convolution over the
    brain mask) of masked log intensities, shifted to unit geometric mean
    over the brain so global brightness is preserved. Correction is applied
    on the native grid.
    """
    brain = as_mask(brain)
    if not brain.any():
        raise EmptyBrainMask("brain mask is empty")
    data = vol.data.astype(np.float64)
    inside = data[brain]
    positive = inside[inside > 0]
    if positive.size == 0:
        raise EmptyBrainMask("no positive intensities inside brain")
    floor = float(positive.min())
    lifted = np.where(data > 0, data, floor)
    log_v = np.where(brain, np.log(lifted), 0.0)

    sigma_vox = [sigma_mm / s for s in vol.spacing]
    num = vc._gaussian_vox(log_v, sigma_vox).astype(np.float64)
    den = vc._gaussian_vox(brain.astype(np.float64), sigma_vox).astype(np.float64)
    field = np.where(den > 1e-6, num / np.maximum(den, 1e-6), 0.0)
    field -= field[brain].mean()

    corrected = np.where(brain, data / np.exp(field), data)
    return vol.with_data(corrected.astype(np.float32))


def extract_brain(vol: Volume3D) -> np.ndarray:
    """Otsu threshold followed by hole filling and morphological closing."""
    thr = otsu_threshold(vol)
    return fill_holes_and_close(vol.data > thr)


def apply_brain_mask(vol: Volume3D, brain: np.ndarray) -> Volume3D:
    return vol.with_data(vol.data * as_mask(brain).astype(np.float32))


def roi_box(labels: np.ndarray, pad: int = DEFAULT_PAD) -> BoundingBox:
    """Minimal bounding box of the tumor (labels > 0), padded and clamped."""
    tumor = np.asarray(labels) > 0
    if not tumor.any():
        raise EmptyTumor("no tumor voxels in label volume")
    lo, hi = [], []
    for axis in range(3):
        proj = tumor.any(axis=tuple(a for a in range(3) if a != axis))
        idx = np.flatnonzero(proj)
        lo.append(max(int(idx[0]) - pad, 0))
        hi.append(min(int(idx[-1]) + pad, tumor.shape[axis] - 1))
    return BoundingBox(lo=tuple(lo), hi=tuple(hi))


def crop(vol: Volume3D, box: BoundingBox) -> Volume3D:
    return vol.with_data(vol.data[box.slices()])


def crop_array(arr: np.ndarray, box: BoundingBox) -> np.ndarray:
    return arr[box.slices()]


def _clahe_slice(img: np.ndarray, mask: np.ndarray, clip_limit: float, tiles: int = 8, nbins: int = 256) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization on one [0,1] slice.

    Histograms are built from in-mask pixels per tile on an 8x8 tile grid,
    clipped at clip_limit * tile count with uniform excess redistribution,
    and tile mappings are blended bilinearly. Only in-mask pixels change.
    """
    h, w = img.shape
    ys, xs = np.nonzero(mask)
    vals = img[ys, xs]
    bins = np.clip((vals * nbins).astype(np.int64), 0, nbins - 1)
    ty = np.clip((ys * tiles) // h, 0, tiles - 1)
    tx = np.clip((xs * tiles) // w, 0, tiles - 1)
    tile_idx = ty * tiles + tx

    hist = np.bincount(tile_idx * nbins + bins, minlength=tiles * tiles * nbins)
    hist = hist.reshape(tiles * tiles, nbins).astype(np.float64)
    counts = hist.sum(axis=1)

    limit = np.maximum(clip_limit * counts, 1.0)
    excess = np.maximum(hist - limit[:, None], 0.0).sum(axis=1)
    hist = np.minimum(hist, limit[:, None]) + (excess / nbins)[:, None]

    csum = np.cumsum(hist, axis=1)
    totals = np.maximum(csum[:, -1], 1e-12)
    mapping = (csum - 0.5 * hist) / totals[:, None]
    # empty tiles fall back to the identity mapping
    centers = (np.arange(nbins) + 0.5) / nbins
    mapping[counts == 0] = centers

    mapping = mapping.reshape(tiles, tiles, nbins)

    # bilinear blend between the four surrounding tile mappings
    fy = np.clip(ys * tiles / h - 0.5, 0.0, tiles - 1.0)
    fx = np.clip(xs * tiles / w - 0.5, 0.0, tiles - 1.0)
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    y1 = np.minimum(y0 + 1, tiles - 1)
    x1 = np.minimum(x0 + 1, tiles - 1)
    wy = fy - y0
    wx = fx - x0

    m00 = mapping[y0, x0, bins]
    m01 = mapping[y0, x1, bins]
    m10 = mapping[y1, x0, bins]
    m11 = mapping[y1, x1, bins]
    blended = (
        (1 - wy) * ((1 - wx) * m00 + wx * m01)
        + wy * ((1 - wx) * m10 + wx * m11)
    )

    out = img.copy()
    out[ys, xs] = blended
    return out


def standardize_intensity(
    vol: Volume3D,
    roi: np.ndarray,
    n_min: int = DEFAULT_N_MIN,
    clahe_clip: float = DEFAULT_CLAHE_CLIP,
    eps: float = 1e-8,
) -> Volume3D:
    """Robust clip to [p1, p99] of the effective ROI, min-max map to [0,1],
    then slice-wise CLAHE on axial slices restricted to that ROI.

    If the ROI has fewer than n_min voxels, statistics fall back to all
    finite voxels. Near-constant slices (range < 1e-6) are skipped.
    """
    data = vol.data.astype(np.float64)
    finite = np.isfinite(data)
    roi = as_mask(roi)
    if roi.sum() < n_min:
        reff = finite
    else:
        reff = roi & finite
    if not reff.any():
        raise EmptyRegion("effective ROI is empty")

    vals = data[reff]
    p1 = np.percentile(vals, 1, method="linear")
    p99 = np.percentile(vals, 99, method="linear")
    x = np.clip(data, p1, p99)
    x = (x - p1) / max(p99 - p1, eps)
    x = np.clip(x, 0.0, 1.0)

    out = x.astype(np.float32)
    for z in range(out.shape[0]):
        sl_mask = reff[z]
        if not sl_mask.any():
            continue
        sl_vals = out[z][sl_mask]
        if float(sl_vals.max() - sl_vals.min()) < 1e-6:
            continue
        out[z] = _clahe_slice(out[z].astype(np.float64), sl_mask, clahe_clip).astype(np.float32)
    return vol.with_data(np.clip(out, 0.0, 1.0))


def harmonize_grid(bundle: SubjectBundle, target_dims: tuple[int, int, int] = DEFAULT_GRID) -> SubjectBundle:
    """Resample modalities (trilinear) and labels (nearest) to a fixed grid."""
    bundle.validate()
    modalities = {m: resample(v, target_dims, "trilinear") for m, v in bundle.modalities.items()}
    lab_vol = Volume3D(bundle.labels.astype(np.float32), bundle.label_spacing)
    lab_res = resample(lab_vol, target_dims, "nearest")
    return SubjectBundle(
        subject_id=bundle.subject_id,
        modalities=modalities,
        labels=np.rint(lab_res.data).astype(np.int16),
        label_spacing=lab_res.spacing,
    )


def canonicalize_labels(labels: np.ndarray) -> CanonicalLabels:
    """Derive nested ET/TC/WT maps and background from BraTS labels."""
    s = validate_labels(labels)
    et = s == 4
    tc = (s == 1) | (s == 4)
    wt = (s == 1) | (s == 2) | (s == 4)
    return CanonicalLabels(et=et, tc=tc, wt=wt, bg=s == 0)


def probability_channels(class_probs: np.ndarray, tol: float = 1e-4) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse 4-class voxel probabilities to nested ET/TC/WT channels.

    class order: 0 background, 1 tumor-core-only, 2 whole-tumor-only,
    3 enhancing tumor.
    """
    p = np.asarray(class_probs, dtype=np.float64)
    if p.ndim != 4 or p.shape[0] != 4:
        raise NotNormalized("expected class-probability array of shape (4, D, H, W)")
    if np.any(p < -tol) or np.max(np.abs(p.sum(axis=0) - 1.0)) > tol:
        raise NotNormalized("per-voxel probabilities must be a simplex within tolerance")
    et = p[3]
    tc = p[1] + p[3]
    wt = 1.0 - p[0]
    return et.astype(np.float32), tc.astype(np.float32), wt.astype(np.float32)


def synthesize_soft_maps(
    canon: CanonicalLabels, sigma_vox: float = DEFAULT_SOFT_SIGMA_VOX
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian-smoothed, nested probability maps from hard canonical labels."""
    p_et = np.clip(gaussian_smooth_vox(canon.et.astype(np.float32), sigma_vox), 0.0, 1.0)
    p_tc = np.clip(gaussian_smooth_vox(canon.tc.astype(np.float32), sigma_vox), 0.0, 1.0)
    p_wt = np.clip(gaussian_smooth_vox(canon.wt.astype(np.float32), sigma_vox), 0.0, 1.0)
    p_tc = np.maximum(p_tc, p_et)
    p_wt = np.maximum(p_wt, p_tc)
    return p_et, p_tc, p_wt


def assemble_eight_channel(
    modalities: dict[str, Volume3D],
    canon: CanonicalLabels,
    soft_maps: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> np.ndarray:
    """Stack [T1, T1CE, T2, FLAIR, WT, P(ET), P(TC), P(WT)] as (8, D, H, W)."""
    p_et, p_tc, p_wt = soft_maps
    shape = modalities["t1"].dims
    parts = {
        "t1": modalities["t1"].data,
        "t1ce": modalities["t1ce"].data,
        "t2": modalities["t2"].data,
        "flair": modalities["flair"].data,
        "wt": canon.wt.astype(np.float32),
        "p_et": p_et,
        "p_tc": p_tc,
        "p_wt": p_wt,
    }
    for name, arr in parts.items():
        if arr.shape != shape:
            raise GridMismatch(f"channel {name} shape {arr.shape} != {shape}")
    return np.stack([parts[c] for c in CHANNEL_ORDER]).astype(np.float32)


@dataclass
class PreprocessedSubject:
    subject_id: str
    modalities: dict[str, Volume3D]        # standardized, harmonized
    labels: np.ndarray                     # harmonized BraTS labels
    spacing: tuple[float, float, float]
    canon: CanonicalLabels
    soft_maps: tuple[np.ndarray, np.ndarray, np.ndarray]
    channels: np.ndarray                   # (8, D, H, W)


def preprocess_subject(
    bundle: SubjectBundle,
    pad: int = DEFAULT_PAD,
    target_dims: tuple[int, int, int] = DEFAULT_GRID,
    n_min: int = DEFAULT_N_MIN,
    clahe_clip: float = DEFAULT_CLAHE_CLIP,
    bias_sigma_mm: float = DEFAULT_BIAS_SIGMA_MM,
    soft_sigma_vox: float = DEFAULT_SOFT_SIGMA_VOX,
) -> PreprocessedSubject:
    """Full per-subject pipeline producing harmonized volumes and channels."""
    bundle.validate()
    labels = validate_labels(bundle.labels)
    box = roi_box(labels, pad=pad)

    corrected: dict[str, Volume3D] = {}
    for name, vol in bundle.modalities.items():
        rough = extract_brain(vol)
        vol = correct_bias(vol, rough, sigma_mm=bias_sigma_mm)
        brain = extract_brain(vol)
        corrected[name] = apply_brain_mask(vol, brain)

    cropped_labels = crop_array(labels, box)
    tumor_roi = cropped_labels > 0
    standardized = {
        name: standardize_intensity(crop(vol, box), tumor_roi, n_min=n_min, clahe_clip=clahe_clip)
        for name, vol in corrected.items()
    }

    harmonized = harmonize_grid(
        SubjectBundle(
            subject_id=bundle.subject_id,
            modalities=standardized,
            labels=cropped_labels,
            label_spacing=bundle.modalities["t1"].spacing,
        ),
        target_dims=target_dims,
    )
    canon = canonicalize_labels(harmonized.labels)
    soft = synthesize_soft_maps(canon, sigma_vox=soft_sigma_vox)
    channels = assemble_eight_channel(harmonized.modalities, canon, soft)
    return PreprocessedSubject(
        subject_id=bundle.subject_id,
        modalities=harmonized.modalities,
        labels=harmonized.labels,
        spacing=harmonized.label_spacing,
        canon=canon,
        soft_maps=soft,
        channels=channels,
    )
