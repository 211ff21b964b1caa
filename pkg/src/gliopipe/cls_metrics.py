"""Binary classification metrics and post-hoc probability calibration:
confusion counts and rates, macro-F1, pairwise (Mann-Whitney) ROC-AUC,
Brier score, temperature scaling, and Youden-J threshold selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLogits, UndefinedAUC

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(labels, probs, threshold: float = 0.5) -> ConfusionMatrix:
    """Counts with the rule: predict positive iff prob >= threshold."""
    y = np.asarray(labels).astype(int)
    p = np.asarray(probs, dtype=np.float64)
    pred = p >= threshold
    return ConfusionMatrix(
        tp=int(np.sum(pred & (y == 1))),
        tn=int(np.sum(~pred & (y == 0))),
        fp=int(np.sum(pred & (y == 0))),
        fn=int(np.sum(~pred & (y == 1))),
    )


def _safe_div(num: float, den: float) -> float:
    # 0/0 convention: rate is 0 (flagged degenerate by callers that care)
    return num / den if den > 0 else 0.0


def basic_rates(cm: ConfusionMatrix) -> dict[str, float]:
    """ACC, TPR, TNR, FPR, precision, recall straight from their formulas."""
    return {
        "acc": _safe_div(cm.tp + cm.tn, cm.total),
        "tpr": _safe_div(cm.tp, cm.tp + cm.fn),
        "tnr": _safe_div(cm.tn, cm.tn + cm.fp),
        "fpr": _safe_div(cm.fp, cm.fp + cm.tn),
        "precision": _safe_div(cm.tp, cm.tp + cm.fp),
        "recall": _safe_div(cm.tp, cm.tp + cm.fn),
    }


def _f1(precision: float, recall: float) -> float:
    return _safe_div(2.0 * precision * recall, precision + recall)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Mean of the per-class F1 scores; class 0 uses swapped confusion roles."""
    f1_pos = _f1(_safe_div(cm.tp, cm.tp + cm.fp), _safe_div(cm.tp, cm.tp + cm.fn))
    f1_neg = _f1(_safe_div(cm.tn, cm.tn + cm.fn), _safe_div(cm.tn, cm.tn + cm.fp))
    return 0.5 * (f1_pos + f1_neg)


def roc_auc(labels, scores) -> float:
    """Mann-Whitney AUC: fraction of (pos, neg) pairs ranked correctly,
    ties counted one half. Equals the trapezoidal ROC integral."""
    y = np.asarray(labels).astype(int)
    s = np.asarray(scores, dtype=np.float64)
    pos = s[y == 1]
    neg = s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedAUC("both classes must be present")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def roc_points(labels, scores) -> list[tuple[float, float]]:
    """(FPR, TPR) pairs swept over all distinct score thresholds."""
    y = np.asarray(labels).astype(int)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    pts = [(0.0, 0.0)]
    for thr in np.unique(s)[::-1]:
        pred = s >= thr
        tp = int(np.sum(pred & (y == 1)))
        fp = int(np.sum(pred & (y == 0)))
        pts.append((_safe_div(fp, n_neg), _safe_div(tp, n_pos)))
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return pts


def brier(labels, probs) -> float:
    """Mean squared difference between probabilities and binary labels."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    return float(np.mean((p - y) ** 2))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def nll(labels, probs) -> float:
    y = np.asarray(labels, dtype=np.float64)
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def temperature_scale(labels, logits, tol: float = 1e-4) -> float:
    """Temperature minimizing validation NLL of sigmoid(logit / T).

    Golden-section search on log T in [ln 0.05, ln 20]; never returns a
    temperature worse than T = 1 on the given set.
    """
    y = np.asarray(labels).astype(int)
    z = np.asarray(logits, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise DegenerateLogits("temperature scaling needs both classes")

    def loss(log_t: float) -> float:
        return nll(y, sigmoid(z / np.exp(log_t)))

    lo, hi = np.log(0.05), np.log(20.0)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = loss(c), loss(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = loss(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = loss(d)
    t = float(np.exp(0.5 * (a + b)))
    if loss(np.log(t)) > loss(0.0):
        return 1.0
    return t


def select_threshold(labels, probs) -> float:
    """Threshold maximizing Youden's J (TPR - FPR) on a validation cohort.

    Candidates are midpoints between adjacent distinct probabilities; ties
    break toward 0.5. A constant score set returns 0.5.
    """
    y = np.asarray(labels).astype(int)
    p = np.asarray(probs, dtype=np.float64)
    uniq = np.unique(p)
    if uniq.size < 2:
        return 0.5
    candidates = 0.5 * (uniq[:-1] + uniq[1:])
    scored = []
    for t in candidates:
        r = basic_rates(confusion(y, p, threshold=t))
        scored.append((r["tpr"] - r["fpr"], float(t)))
    j_max = max(j for j, _ in scored)
    ties = [t for j, t in scored if j >= j_max - 1e-12]
    return min(ties, key=lambda t: (abs(t - 0.5), t))


def classification_report(labels, probs, threshold: float = 0.5, temperature: float = 1.0) -> dict:
    """Report JSON shape: AUC, accuracy, macro-F1, Brier, confusion, knobs."""
    cm = confusion(labels, probs, threshold)
    rates = basic_rates(cm)
    return {
        "roc_auc": roc_auc(labels, probs),
        "accuracy": rates["acc"],
        "macro_f1": macro_f1(cm),
        "brier": brier(labels, probs),
        "confusion": {"tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn},
        "threshold": threshold,
        "temperature": temperature,
    }
