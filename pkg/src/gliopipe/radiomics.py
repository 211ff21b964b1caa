"""Handcrafted feature extraction inside the tumor ROI.

Families: first-order statistics, shape, five texture matrices (GLCM,
GLRLM, GLSZM, GLDM, NGTDM), and extra descriptors (HOG3D, FFT spectral
statistics, histogram moments, box-counting fractal dimension), plus
train-statistics standardization.

Texture matrices are computed on a fixed-bin-width discretization
(bin width 5 on a 0-255 rescaled copy) after resampling to an isotropic
2 mm grid. GLCM/GLRLM use the 13 unique 3-D directions at distance 1
and are direction-averaged; zones and neighborhoods use 26-connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyRegion
from .volume import Volume3D, as_mask, fft3, percentile, resample

LOG2 = np.log(2.0)

# 13 unique direction vectors (dz, dy, dx): one of each +/- pair
DIRECTIONS = [
    (0, 0, 1),
    (0, 1, -1), (0, 1, 0), (0, 1, 1),
    (1, -1, -1), (1, -1, 0), (1, -1, 1),
    (1, 0, -1), (1, 0, 0), (1, 0, 1),
    (1, 1, -1), (1, 1, 0), (1, 1, 1),
]

NEIGHBORS_26 = [
    (dz, dy, dx)
    for dz in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dz, dy, dx) != (0, 0, 0)
]

STRUCT_26 = np.ones((3, 3, 3), dtype=bool)

DEFAULT_BIN_WIDTH = 5.0
DEFAULT_RESAMPLE_MM = (2.0, 2.0, 2.0)
NGTDM_COARSENESS_CAP = 1e6


@dataclass
class DiscretizedRoi:
    """Integer gray levels 1..n_levels inside roi (0 outside)."""

    levels: np.ndarray
    mask: np.ndarray
    spacing: tuple[float, float, float]
    n_levels: int


def discretize(vol: Volume3D, roi: np.ndarray, bin_width: float = DEFAULT_BIN_WIDTH) -> DiscretizedRoi:
    """Fixed-bin-width quantization: level = floor((x - min) / width) + 1."""
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    vals = vol.data[mask].astype(np.float64)
    lo = vals.min()
    levels = np.zeros(vol.dims, dtype=np.int64)
    levels[mask] = np.floor((vals - lo) / bin_width).astype(np.int64) + 1
    return DiscretizedRoi(levels=levels, mask=mask, spacing=vol.spacing, n_levels=int(levels.max()))


def rescale_to_255(vol: Volume3D, roi: np.ndarray) -> Volume3D:
    """Map roi intensities onto [0, 255]; constant rois map to 0."""
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    vals = vol.data[mask].astype(np.float64)
    lo, hi = vals.min(), vals.max()
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    return vol.with_data(((vol.data - lo) * scale).astype(np.float32))


# ---------------------------------------------------------------------------
# first order


def first_order(vol: Volume3D, roi: np.ndarray) -> dict[str, float]:
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    x = vol.data[mask].astype(np.float64)
    mean = x.mean()
    var = x.var()  # population
    std = np.sqrt(var)
    if std > 1e-12:
        skew = float(np.mean((x - mean) ** 3) / std**3)
        kurt = float(np.mean((x - mean) ** 4) / std**4 - 3.0)  # excess
    else:
        skew = kurt = 0.0
    hist, _ = np.histogram(x, bins=32)
    p = hist[hist > 0] / hist.sum()
    entropy = float(-(p * np.log(p) / LOG2).sum())
    return {
        "fo_mean": float(mean),
        "fo_variance": float(var),
        "fo_skewness": skew,
        "fo_kurtosis": kurt,
        "fo_energy": float((x**2).sum()),
        "fo_entropy": entropy,
        "fo_min": float(x.min()),
        "fo_max": float(x.max()),
        "fo_median": percentile(x, 50),
        "fo_p10": percentile(x, 10),
        "fo_p90": percentile(x, 90),
        "fo_rms": float(np.sqrt(np.mean(x**2))),
        "fo_iqr": percentile(x, 75) - percentile(x, 25),
    }


# ---------------------------------------------------------------------------
# shape


def _surface_area(mask: np.ndarray, spacing) -> float:
    dz, dy, dx = spacing
    face_area = {0: dy * dx, 1: dz * dx, 2: dz * dy}
    total = 0.0
    padded = np.pad(mask, 1, constant_values=False)
    core = padded[1:-1, 1:-1, 1:-1]
    for axis in range(3):
        for shift in (-1, 1):
            neigh = np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
            total += float(np.sum(core & ~neigh)) * face_area[axis]
    return total


def _max_diameter(points_mm: np.ndarray) -> float:
    if len(points_mm) == 1:
        return 0.0
    pts = points_mm
    if len(pts) > 400:
        try:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(pts, qhull_options="QJ")
            pts = pts[hull.vertices]
        except Exception:
            pass  # degenerate geometry: fall through to brute force
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def shape_features(roi: np.ndarray, spacing) -> dict[str, float]:
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    dz, dy, dx = spacing
    n = int(mask.sum())
    vol_mm3 = n * dz * dy * dx
    area = _surface_area(mask, spacing)
    sphericity = float(np.pi ** (1.0 / 3.0) * (6.0 * vol_mm3) ** (2.0 / 3.0) / area)

    coords = np.argwhere(mask).astype(np.float64) * np.asarray(spacing)
    surf = np.argwhere(mask & ~ndimage.binary_erosion(mask)).astype(np.float64) * np.asarray(spacing)
    diameter = _max_diameter(surf if len(surf) else coords)

    centered = coords - coords.mean(axis=0)
    cov = centered.T @ centered / len(coords)
    eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
    if eig[0] > 1e-12:
        elongation = float(np.sqrt(max(eig[1], 0.0) / eig[0]))
        flatness = float(np.sqrt(max(eig[2], 0.0) / eig[0]))
    else:
        elongation = flatness = 1.0
    return {
        "shape_volume": vol_mm3,
        "shape_surface_area": area,
        "shape_sphericity": sphericity,
        "shape_max_diameter": diameter,
        "shape_elongation": elongation,
        "shape_flatness": flatness,
    }


# ---------------------------------------------------------------------------
# texture helpers


def _shifted_slices(shape, d):
    """Index pairs (src, dst) so that arr[src] aligns with arr shifted by d."""
    src, dst = [], []
    for n, delta in zip(shape, d):
        if delta == 0:
            src.append(slice(0, n))
            dst.append(slice(0, n))
        elif delta > 0:
            src.append(slice(0, n - delta))
            dst.append(slice(delta, n))
        else:
            src.append(slice(-delta, n))
            dst.append(slice(0, n + delta))
    return tuple(src), tuple(dst)


def _entropy_log2(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p) / LOG2).sum())


# ---------------------------------------------------------------------------
# GLCM


def glcm_matrix(d: DiscretizedRoi, direction) -> np.ndarray:
    """Symmetric co-occurrence counts for one direction (unnormalized)."""
    ng = d.n_levels
    mat = np.zeros((ng, ng), dtype=np.float64)
    src, dst = _shifted_slices(d.levels.shape, direction)
    valid = d.mask[src] & d.mask[dst]
    a = d.levels[src][valid] - 1
    b = d.levels[dst][valid] - 1
    np.add.at(mat, (a, b), 1.0)
    np.add.at(mat, (b, a), 1.0)
    return mat


def _glcm_features_one(p: np.ndarray) -> dict[str, float]:
    ng = p.shape[0]
    i = np.arange(1, ng + 1, dtype=np.float64)
    ii, jj = np.meshgrid(i, i, indexing="ij")
    diff = np.abs(ii - jj)
    mu = float((p * ii).sum())
    sigma2 = float((p * (ii - mu) ** 2).sum())
    if sigma2 > 1e-12:
        corr = float(((p * (ii - mu) * (jj - mu)).sum()) / sigma2)
    else:
        corr = 0.0
    return {
        "glcm_contrast": float((p * diff**2).sum()),
        "glcm_dissimilarity": float((p * diff).sum()),
        "glcm_homogeneity": float((p / (1.0 + diff)).sum()),
        "glcm_energy": float((p**2).sum()),
        "glcm_entropy": _entropy_log2(p.ravel()),
        "glcm_correlation": corr,
    }


GLCM_FALLBACK = {
    "glcm_contrast": 0.0,
    "glcm_dissimilarity": 0.0,
    "glcm_homogeneity": 1.0,
    "glcm_energy": 1.0,
    "glcm_entropy": 0.0,
    "glcm_correlation": 0.0,
}


def glcm_features(d: DiscretizedRoi) -> dict[str, float]:
    """Direction-averaged co-occurrence features (13 directions)."""
    per_dir = []
    for direction in DIRECTIONS:
        mat = glcm_matrix(d, direction)
        total = mat.sum()
        if total == 0:
            continue
        per_dir.append(_glcm_features_one(mat / total))
    if not per_dir:
        return dict(GLCM_FALLBACK)
    return {k: float(np.mean([f[k] for f in per_dir])) for k in per_dir[0]}


# ---------------------------------------------------------------------------
# GLRLM


def glrlm_matrix(d: DiscretizedRoi, direction) -> np.ndarray:
    """Run-length counts R[level-1, length-1] along one direction."""
    levels, mask = d.levels, d.mask
    shape = levels.shape

    def shifted(arr, fill):
        # arr evaluated at p + direction (out of range -> fill)
        out = np.full(shape, fill, dtype=arr.dtype)
        src, dst = _shifted_slices(shape, direction)
        out[src] = arr[dst]
        return out

    next_mask = shifted(mask, False)
    next_levels = shifted(levels, -1)
    cont = mask & next_mask & (levels == next_levels)  # run continues at p -> p+d

    # dynamic programming: remaining run length from each voxel
    run_len = mask.astype(np.int64)
    while True:
        nxt = shifted(run_len, 0)
        new = np.where(cont, 1 + nxt, run_len * mask)
        new = np.where(mask, new, 0)
        if np.array_equal(new, run_len):
            break
        run_len = new

    prev_mask = np.full(shape, False)
    src, dst = _shifted_slices(shape, tuple(-c for c in direction))
    prev_mask[src] = mask[dst]
    prev_levels = np.full(shape, -1, dtype=levels.dtype)
    prev_levels[src] = levels[dst]
    starts = mask & ~(prev_mask & (prev_levels == levels))

    max_len = int(run_len[starts].max()) if starts.any() else 1
    mat = np.zeros((d.n_levels, max_len), dtype=np.float64)
    np.add.at(mat, (d.levels[starts] - 1, run_len[starts] - 1), 1.0)
    return mat


def _glrlm_features_one(mat: np.ndarray, n_voxels: int) -> dict[str, float]:
    nr = mat.sum()
    lengths = np.arange(1, mat.shape[1] + 1, dtype=np.float64)
    row = mat.sum(axis=1)
    col = mat.sum(axis=0)
    return {
        "glrlm_sre": float((col / lengths**2).sum() / nr),
        "glrlm_lre": float((col * lengths**2).sum() / nr),
        "glrlm_gln": float((row**2).sum() / nr),
        "glrlm_rln": float((col**2).sum() / nr),
        "glrlm_run_percentage": float(nr / n_voxels),
    }


def glrlm_features(d: DiscretizedRoi) -> dict[str, float]:
    """Direction-averaged run-length features (13 directions)."""
    n_voxels = int(d.mask.sum())
    per_dir = [_glrlm_features_one(glrlm_matrix(d, direction), n_voxels) for direction in DIRECTIONS]
    return {k: float(np.mean([f[k] for f in per_dir])) for k in per_dir[0]}


# ---------------------------------------------------------------------------
# GLSZM


def glszm_zones(d: DiscretizedRoi) -> list[tuple[int, int]]:
    """(level, zone size) for each 26-connected equal-level component."""
    zones = []
    for g in range(1, d.n_levels + 1):
        sel = (d.levels == g) & d.mask
        if not sel.any():
            continue
        labeled, n = ndimage.label(sel, structure=STRUCT_26)
        sizes = np.bincount(labeled.ravel())[1:]
        zones.extend((g, int(s)) for s in sizes)
    return zones


def glszm_features(d: DiscretizedRoi) -> dict[str, float]:
    zones = glszm_zones(d)
    if not zones:
        raise EmptyRegion("roi is empty")
    n_voxels = int(d.mask.sum())
    nz = len(zones)
    sizes = np.array([s for _, s in zones], dtype=np.float64)
    levels = np.array([g for g, _ in zones], dtype=np.float64)
    gl_counts = np.bincount(levels.astype(np.int64))
    return {
        "glszm_sze": float((1.0 / sizes**2).sum() / nz),
        "glszm_lze": float((sizes**2).sum() / nz),
        "glszm_zone_percentage": float(nz / n_voxels),
        "glszm_gln": float((gl_counts.astype(np.float64) ** 2).sum() / nz),
    }


# ---------------------------------------------------------------------------
# GLDM


def gldm_dependence(d: DiscretizedRoi, alpha: int = 0) -> np.ndarray:
    """Per-voxel count of 26-neighbors inside roi with |level diff| <= alpha."""
    dep = np.zeros(d.levels.shape, dtype=np.int64)
    for nb in NEIGHBORS_26:
        src, dst = _shifted_slices(d.levels.shape, nb)
        ok = np.zeros(d.levels.shape, dtype=bool)
        ok[src] = d.mask[dst] & (np.abs(d.levels[src] - d.levels[dst]) <= alpha)
        dep += (ok & d.mask).astype(np.int64)
    return np.where(d.mask, dep, 0)


def gldm_features(d: DiscretizedRoi, alpha: int = 0) -> dict[str, float]:
    dep = gldm_dependence(d, alpha)
    n_voxels = int(d.mask.sum())
    if n_voxels == 0:
        raise EmptyRegion("roi is empty")
    j = dep[d.mask] + 1  # dependence size index (count + 1, avoids /0)
    lv = d.levels[d.mask]
    max_j = int(j.max())
    mat = np.zeros((d.n_levels, max_j), dtype=np.float64)
    np.add.at(mat, (lv - 1, j - 1), 1.0)
    sizes = np.arange(1, max_j + 1, dtype=np.float64)
    col = mat.sum(axis=0)
    return {
        "gldm_sde": float((col / sizes**2).sum() / n_voxels),
        "gldm_lde": float((col * sizes**2).sum() / n_voxels),
        "gldm_dnu": float((col**2).sum() / n_voxels),
        "gldm_dependence_entropy": _entropy_log2(mat.ravel() / n_voxels),
    }


# ---------------------------------------------------------------------------
# NGTDM


def ngtdm_table(d: DiscretizedRoi) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-level (n_i, s_i) over voxels that have at least one roi neighbor."""
    shape = d.levels.shape
    nb_sum = np.zeros(shape, dtype=np.float64)
    nb_cnt = np.zeros(shape, dtype=np.float64)
    for nb in NEIGHBORS_26:
        src, dst = _shifted_slices(shape, nb)
        nb_sum[src] += d.levels[dst] * d.mask[dst]
        nb_cnt[src] += d.mask[dst]
    valid = d.mask & (nb_cnt > 0)
    mean_nb = np.where(valid, nb_sum / np.maximum(nb_cnt, 1), 0.0)
    diff = np.abs(d.levels - mean_nb)

    n_i = np.zeros(d.n_levels, dtype=np.float64)
    s_i = np.zeros(d.n_levels, dtype=np.float64)
    lv = d.levels[valid] - 1
    np.add.at(n_i, lv, 1.0)
    np.add.at(s_i, lv, diff[valid])
    return n_i, s_i, int(valid.sum())


def ngtdm_features(d: DiscretizedRoi) -> dict[str, float]:
    n_i, s_i, nv = ngtdm_table(d)
    if nv == 0:
        raise EmptyRegion("roi has no voxels with valid neighborhoods")
    p_i = n_i / nv
    levels = np.arange(1, d.n_levels + 1, dtype=np.float64)
    active = p_i > 0
    ngp = int(active.sum())

    denom_coarse = float((p_i * s_i).sum())
    coarseness = min(1.0 / denom_coarse, NGTDM_COARSENESS_CAP) if denom_coarse > 0 else NGTDM_COARSENESS_CAP

    pa, ia, sa = p_i[active], levels[active], s_i[active]
    if ngp > 1:
        pij = pa[:, None] * pa[None, :]
        dij2 = (ia[:, None] - ia[None, :]) ** 2
        contrast = float((pij * dij2).sum()) * s_i.sum() / (ngp * (ngp - 1) * nv)
    else:
        contrast = 0.0

    denom_busy = float(np.abs(ia[:, None] * pa[:, None] - ia[None, :] * pa[None, :]).sum())
    busyness = denom_coarse / denom_busy if denom_busy > 0 else 0.0

    absdiff = np.abs(ia[:, None] - ia[None, :])
    psum = pa[:, None] + pa[None, :]
    complexity = float((absdiff * (pa[:, None] * sa[:, None] + pa[None, :] * sa[None, :]) / psum).sum() / nv)

    s_total = float(s_i.sum())
    strength = float((psum * (ia[:, None] - ia[None, :]) ** 2).sum() / s_total) if s_total > 0 else 0.0

    return {
        "ngtdm_coarseness": float(coarseness),
        "ngtdm_contrast": float(contrast),
        "ngtdm_busyness": float(busyness),
        "ngtdm_complexity": complexity,
        "ngtdm_strength": strength,
    }


# ---------------------------------------------------------------------------
# extras: HOG3D, FFT spectral stats, histogram moments, fractal dimension


def hog3d(vol: Volume3D, roi: np.ndarray, n_azimuth: int = 8, n_elevation: int = 4) -> np.ndarray:
    """Magnitude-weighted gradient-orientation histogram, L1-normalized.

    All-zero gradients fall back to the uniform histogram.
    """
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    gz, gy, gx = np.gradient(vol.data.astype(np.float64))
    gz, gy, gx = gz[mask], gy[mask], gx[mask]
    mag = np.sqrt(gx**2 + gy**2 + gz**2)
    n_bins = n_azimuth * n_elevation
    if mag.sum() <= 0:
        return np.full(n_bins, 1.0 / n_bins)
    azimuth = np.arctan2(gy, gx)  # [-pi, pi)
    elevation = np.arcsin(np.clip(gz / np.maximum(mag, 1e-300), -1.0, 1.0))  # [-pi/2, pi/2]
    a_bin = np.clip(((azimuth + np.pi) / (2 * np.pi) * n_azimuth).astype(np.int64), 0, n_azimuth - 1)
    e_bin = np.clip(((elevation + np.pi / 2) / np.pi * n_elevation).astype(np.int64), 0, n_elevation - 1)
    hist = np.zeros(n_bins)
    np.add.at(hist, e_bin * n_azimuth + a_bin, mag)
    return hist / hist.sum()


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def fft_spectral_stats(vol: Volume3D, roi: np.ndarray) -> dict[str, float]:
    """Radial spectral centroid and low/mid/high band energy fractions
    over the zero-padded power-of-two roi crop (bands are thirds of Nyquist)."""
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    idx = np.argwhere(mask)
    lo = idx.min(axis=0)
    hi = idx.max(axis=0) + 1
    crop = (vol.data * mask)[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]].astype(np.float64)
    padded_shape = tuple(_next_pow2(n) for n in crop.shape)
    padded = np.zeros(padded_shape)
    padded[: crop.shape[0], : crop.shape[1], : crop.shape[2]] = crop

    power = np.abs(fft3(padded)) ** 2
    freqs = np.meshgrid(*[np.fft.fftfreq(n) for n in padded_shape], indexing="ij")
    r = np.sqrt(sum(f**2 for f in freqs)) / 0.5  # radial frequency / Nyquist

    total = power.sum()
    if total <= 0:
        return {"fft_centroid": 0.0, "fft_low": 0.0, "fft_mid": 0.0, "fft_high": 0.0}
    centroid = float((r * power).sum() / total)
    low = float(power[r < 1.0 / 3.0].sum() / total)
    mid = float(power[(r >= 1.0 / 3.0) & (r < 2.0 / 3.0)].sum() / total)
    high = float(power[r >= 2.0 / 3.0].sum() / total)
    return {"fft_centroid": centroid, "fft_low": low, "fft_mid": mid, "fft_high": high}


def histogram_moments(vol: Volume3D, roi: np.ndarray, n_bins: int = 64) -> dict[str, float]:
    """First four moments of the binned roi intensity distribution."""
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    vals = vol.data[mask].astype(np.float64)
    hist, edges = np.histogram(vals, bins=n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    p = hist / hist.sum()
    mean = float((p * centers).sum())
    var = float((p * (centers - mean) ** 2).sum())
    std = np.sqrt(var)
    if std > 1e-12:
        skew = float((p * (centers - mean) ** 3).sum() / std**3)
        kurt = float((p * (centers - mean) ** 4).sum() / std**4 - 3.0)
    else:
        skew = kurt = 0.0
    return {"hist_m1": mean, "hist_m2": var, "hist_m3": skew, "hist_m4": kurt}


def box_counting_dimension(mask: np.ndarray, scales=(1, 2, 4, 8)) -> float:
    """Least-squares slope of log N(s) vs log(1/s) on the roi bounding box."""
    m = as_mask(mask)
    if not m.any():
        raise EmptyRegion("mask is empty")
    idx = np.argwhere(m)
    lo = idx.min(axis=0)
    hi = idx.max(axis=0) + 1
    m = m[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    counts = []
    for s in scales:
        padded_shape = tuple(int(np.ceil(n / s) * s) for n in m.shape)
        grid = np.zeros(padded_shape, dtype=bool)
        grid[: m.shape[0], : m.shape[1], : m.shape[2]] = m
        blocks = grid.reshape(
            padded_shape[0] // s, s, padded_shape[1] // s, s, padded_shape[2] // s, s
        )
        counts.append(int(blocks.any(axis=(1, 3, 5)).sum()))
    x = np.log(1.0 / np.asarray(scales, dtype=np.float64))
    ylog = np.log(np.maximum(np.asarray(counts, dtype=np.float64), 1.0))
    slope = np.polyfit(x, ylog, 1)[0]
    return float(slope)


def extras_features(vol: Volume3D, roi: np.ndarray) -> dict[str, float]:
    out: dict[str, float] = {}
    hog = hog3d(vol, roi)
    out.update({f"extras_hog_{i:02d}": float(v) for i, v in enumerate(hog)})
    out.update({f"extras_{k}": v for k, v in fft_spectral_stats(vol, roi).items()})
    out.update({f"extras_{k}": v for k, v in histogram_moments(vol, roi).items()})
    out["extras_fractal_dim"] = box_counting_dimension(roi)
    return out


# ---------------------------------------------------------------------------
# full extraction and standardization


def resample_to_spacing(vol: Volume3D, roi: np.ndarray, target_mm) -> tuple[Volume3D, np.ndarray]:
    """Trilinear image / nearest mask resample onto an isotropic grid."""
    target_dims = tuple(
        max(int(round(n * sp / t)), 1) for n, sp, t in zip(vol.dims, vol.spacing, target_mm)
    )
    vol_r = resample(vol, target_dims, "trilinear")
    mask_r = resample(Volume3D(as_mask(roi).astype(np.float32), vol.spacing), target_dims, "nearest")
    return vol_r, mask_r.data > 0.5


def extract_features(
    vol: Volume3D,
    roi: np.ndarray,
    bin_width: float = DEFAULT_BIN_WIDTH,
    resample_mm=DEFAULT_RESAMPLE_MM,
) -> dict[str, float]:
    """Full per-subject feature vector on one channel (T1CE by convention).

    Resamples to the target grid when requested, keeping the native grid if
    the roi would vanish. Output is an ordered name -> value mapping with
    no non-finite entries.
    """
    mask = as_mask(roi)
    if not mask.any():
        raise EmptyRegion("roi is empty")
    if resample_mm is not None and tuple(vol.spacing) != tuple(resample_mm):
        vol_r, mask_r = resample_to_spacing(vol, mask, resample_mm)
        if mask_r.any():
            vol, mask = vol_r, mask_r

    features: dict[str, float] = {}
    features.update(first_order(vol, mask))
    features.update(shape_features(mask, vol.spacing))
    disc = discretize(rescale_to_255(vol, mask), mask, bin_width)
    features.update(glcm_features(disc))
    features.update(glrlm_features(disc))
    features.update(glszm_features(disc))
    features.update(gldm_features(disc))
    features.update(ngtdm_features(disc))
    features.update(extras_features(vol, mask))

    bad = [k for k, v in features.items() if not np.isfinite(v)]
    if bad:
        raise ValueError(f"non-finite features after extraction: {bad}")
    return features


def fit_standardization(train_features: list[dict[str, float]]) -> dict[str, dict[str, float]]:
    """Per-feature mean/std on the training split; tiny std falls back to 1."""
    if len(train_features) < 2:
        raise DimensionMismatch("need at least 2 training vectors")
    names = list(train_features[0])
    for fv in train_features[1:]:
        if list(fv) != names:
            raise DimensionMismatch("feature vectors have differing names/order")
    mat = np.array([[fv[n] for n in names] for fv in train_features], dtype=np.float64)
    means = mat.mean(axis=0)
    stds = mat.std(axis=0)
    stds = np.where(stds < 1e-12, 1.0, stds)
    return {n: {"mean": float(m), "std": float(s)} for n, m, s in zip(names, means, stds)}


def apply_standardization(fv: dict[str, float], stats: dict[str, dict[str, float]]) -> dict[str, float]:
    if set(fv) != set(stats):
        raise DimensionMismatch("feature names do not match standardization stats")
    return {n: (fv[n] - stats[n]["mean"]) / stats[n]["std"] for n in fv}
