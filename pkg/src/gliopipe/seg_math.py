"""Segmentation loss mathematics and evaluation metrics, decoupled from
any network: cross-entropy + soft Dice + cosine-ramped boundary
regularizer, the composite multi-head ensemble loss, region Dice, and
the 95th-percentile bidirectional surface distance (HD95)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .volume import as_mask, dilate, erode
from .preprocess import canonicalize_labels

DICE_EPS = 1e-6
PROB_FLOOR = 1e-12

# class order for 4-class tensors: BG, TC_only(label 1), WT_only(label 2), ET(label 4)
CLASS_TO_BRATS = np.array([0, 1, 2, 4], dtype=np.int16)


@dataclass(frozen=True)
class RampSchedule:
    """Cosine ramp for the boundary-regularizer weight over training epochs."""

    lambda_max: float = 0.3
    total_epochs: int = 100


def softmax_logits(logits: np.ndarray) -> np.ndarray:
    """Numerically stable per-voxel softmax over the leading class axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def cross_entropy(logits: np.ndarray, onehot: np.ndarray) -> float:
    """Mean over voxels of -log P at the true class."""
    p = softmax_logits(logits)
    y = np.asarray(onehot, dtype=np.float64)
    true_p = (p * y).sum(axis=0)
    return float(np.mean(-np.log(np.maximum(true_p, PROB_FLOOR))))


def soft_dice_loss(probs: np.ndarray, onehot: np.ndarray, eps: float = DICE_EPS) -> float:
    """One minus mean soft Dice over the three foreground classes."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(onehot, dtype=np.float64)
    total = 0.0
    for c in range(1, 4):
        inter = (p[c] * y[c]).sum()
        total += (2.0 * inter + eps) / (p[c].sum() + y[c].sum() + eps)
    return float(1.0 - total / 3.0)


def boundary_regularizer(onehot: np.ndarray, probs: np.ndarray | None = None) -> float:
    """Mean activation of the morphological gradient of the foreground.

    The default form depends only on the ground truth; pass probs to use
    the soft predicted foreground instead (experimental variant).
    """
    if probs is not None:
        fg = np.asarray(probs, dtype=np.float64)[1:4].sum(axis=0) > 0.5
    else:
        fg = np.asarray(onehot)[1:4].sum(axis=0) > 0
    grad = dilate(fg).astype(np.float64) - erode(fg).astype(np.float64)
    return float(grad.mean())


def ramp(epoch: float, sched: RampSchedule) -> float:
    """lambda(e) = lambda_max * (1 - cos(pi e / E)) / 2."""
    return float(sched.lambda_max * (1.0 - np.cos(np.pi * epoch / sched.total_epochs)) / 2.0)


def seg_loss(logits: np.ndarray, onehot: np.ndarray, epoch: float, sched: RampSchedule) -> float:
    """Hybrid objective: cross-entropy + soft Dice + ramped boundary term."""
    p = softmax_logits(logits)
    return (
        cross_entropy(logits, onehot)
        + soft_dice_loss(p, onehot)
        + ramp(epoch, sched) * boundary_regularizer(onehot)
    )


def _bce(p: float, y: float, floor: float = PROB_FLOOR) -> float:
    p = min(max(p, floor), 1.0 - floor)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def ensemble_loss(head_probs, y: int, lambda_var: float = 0.0, lambda_jsd: float = 0.0) -> float:
    """Sum of per-head BCE plus variance and Jensen-Shannon disagreement
    penalties across head probabilities."""
    ps = np.asarray(head_probs, dtype=np.float64)
    bce = sum(_bce(float(p), float(y)) for p in ps)
    var = float(np.var(ps))  # population variance
    jsd = jensen_shannon(ps)
    return float(bce + lambda_var * var + lambda_jsd * jsd)


def jensen_shannon(head_probs: np.ndarray) -> float:
    """Generalized JSD of the head Bernoulli distributions from their mean.

    Equals H(mean) - mean(H(p_h)); bounded by ln 2 for binary outcomes.
    """
    ps = np.clip(np.asarray(head_probs, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)

    def entropy(p):
        return -(p * np.log(p) + (1.0 - p) * np.log(1.0 - p))

    m = ps.mean()
    return float(max(entropy(m) - entropy(ps).mean(), 0.0))


def region_masks(labels: np.ndarray) -> dict[str, np.ndarray]:
    canon = canonicalize_labels(labels)
    return {"et": canon.et, "tc": canon.tc, "wt": canon.wt}


def dice_coefficient(pred: np.ndarray, truth: np.ndarray, eps: float = DICE_EPS) -> float:
    """2|A∩B| / (|A|+|B|+eps); both-empty gives 1 by convention."""
    a = as_mask(pred)
    b = as_mask(truth)
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return float(2.0 * inter / (na + nb + eps))


def dice_eval(pred_labels: np.ndarray, true_labels: np.ndarray) -> dict[str, float]:
    """Per-region Dice for ET/TC/WT plus their macro average."""
    pr = region_masks(pred_labels)
    tr = region_masks(true_labels)
    out = {r: dice_coefficient(pr[r], tr[r]) for r in ("et", "tc", "wt")}
    out["macro"] = (out["et"] + out["tc"] + out["wt"]) / 3.0
    return out


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Indices (N, 3) of mask voxels with at least one 6-neighbor outside.

    Voxels on the volume border count as surface.
    """
    m = as_mask(mask)
    padded = np.pad(m, 1, constant_values=False)
    interior = np.ones_like(m)
    for axis in range(3):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        interior &= padded[tuple(lo)] & padded[tuple(hi)]
    return np.argwhere(m & ~interior)


def hd95(pred: np.ndarray, truth: np.ndarray, spacing) -> float | None:
    """95th-percentile bidirectional surface distance in mm.

    Returns None (undefined) when either mask is empty.
    """
    a = as_mask(pred)
    b = as_mask(truth)
    if not a.any() or not b.any():
        return None
    sp = np.asarray(spacing, dtype=np.float64)
    pa = surface_voxels(a) * sp
    pb = surface_voxels(b) * sp
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    q_ab = np.percentile(d_ab, 95, method="linear")
    q_ba = np.percentile(d_ba, 95, method="linear")
    return float(max(q_ab, q_ba))


def hd95_report(pred_labels: np.ndarray, true_labels: np.ndarray, spacing) -> dict[str, float | None]:
    """HD95 per region; regions where either mask is empty report None."""
    pr = region_masks(pred_labels)
    tr = region_masks(true_labels)
    out: dict[str, float | None] = {}
    defined = []
    for r in ("et", "tc", "wt"):
        v = hd95(pr[r], tr[r], spacing)
        out[r] = v
        if v is not None:
            defined.append(v)
    out["average"] = float(np.mean(defined)) if defined else None
    out["undefined_count"] = 3 - len(defined)
    return out
