import numpy as np
import pytest

import oracles
from gliopipe import cls_metrics as cm
from gliopipe.errors import DegenerateLogits, UndefinedAUC


def random_cohort(rng, n=40):
    y = rng.integers(0, 2, n)
    if y.sum() == 0:
        y[0] = 1
    if y.sum() == n:
        y[0] = 0
    p = np.clip(rng.normal(0.35 + 0.3 * y, 0.2), 0.0, 1.0)
    return y, p


# --- confusion and rates ---


def test_confusion_counts_and_boundary_rule():
    y = [1, 1, 0, 0, 1]
    p = [0.9, 0.5, 0.5, 0.1, 0.2]
    c = cm.confusion(y, p, threshold=0.5)
    # prob exactly at the threshold predicts positive
    assert (c.tp, c.tn, c.fp, c.fn) == (2, 1, 1, 1)
    assert c.total == 5


def test_confusion_matches_oracle(rng):
    y, p = random_cohort(rng)
    got = cm.confusion(y, p, 0.5)
    tp, tn, fp, fn = oracles.confusion(y.tolist(), p.tolist(), 0.5)
    assert (got.tp, got.tn, got.fp, got.fn) == (tp, tn, fp, fn)


def test_basic_rates_formulas():
    c = cm.ConfusionMatrix(tp=6, tn=8, fp=2, fn=4)
    r = cm.basic_rates(c)
    assert r["acc"] == pytest.approx(14 / 20)
    assert r["tpr"] == pytest.approx(0.6)
    assert r["tnr"] == pytest.approx(0.8)
    assert r["fpr"] == pytest.approx(0.2)
    assert r["precision"] == pytest.approx(0.75)
    assert r["recall"] == r["tpr"]


def test_rates_zero_denominator_convention():
    r = cm.basic_rates(cm.ConfusionMatrix(tp=0, tn=3, fp=0, fn=0))
    assert r["tpr"] == 0.0 and r["precision"] == 0.0


# --- macro F1 ---


def test_macro_f1_perfect_and_symmetric():
    assert cm.macro_f1(cm.ConfusionMatrix(5, 5, 0, 0)) == 1.0
    a = cm.macro_f1(cm.ConfusionMatrix(tp=3, tn=5, fp=2, fn=1))
    b = cm.macro_f1(cm.ConfusionMatrix(tp=5, tn=3, fp=1, fn=2))  # classes swapped
    assert a == pytest.approx(b, rel=1e-12)


def test_macro_f1_matches_oracle(rng):
    for _ in range(20):
        tp, tn, fp, fn = (int(v) for v in rng.integers(0, 10, 4))
        if tp + tn + fp + fn == 0:
            continue
        got = cm.macro_f1(cm.ConfusionMatrix(tp, tn, fp, fn))
        assert got == pytest.approx(oracles.macro_f1(tp, tn, fp, fn), rel=1e-12)


# --- AUC ---


def test_auc_worked_example():
    # pairs: (0.8>0.4), (0.8>0.3), (0.2<0.4), (0.2<0.3) -> 2/4
    assert cm.roc_auc([1, 1, 0, 0], [0.8, 0.2, 0.4, 0.3]) == 0.5
    assert cm.roc_auc([1, 0], [0.7, 0.7]) == 0.5  # tie counts half
    assert cm.roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.9, 0.8]) == 1.0


def test_auc_matches_oracle_and_trapezoid(rng):
    y, p = random_cohort(rng, n=30)
    got = cm.roc_auc(y, p)
    assert got == pytest.approx(oracles.auc(y.tolist(), p.tolist()), abs=1e-12)
    pts = cm.roc_points(y, p)
    trap = sum(
        (x1 - x0) * 0.5 * (y0 + y1) for (x0, y0), (x1, y1) in zip(pts, pts[1:])
    )
    assert got == pytest.approx(trap, abs=1e-12)


def test_auc_single_class_raises():
    with pytest.raises(UndefinedAUC):
        cm.roc_auc([1, 1, 1], [0.2, 0.5, 0.8])


def test_roc_points_endpoints_and_monotone(rng):
    y, p = random_cohort(rng)
    pts = cm.roc_points(y, p)
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
    assert all(a[0] <= b[0] + 1e-12 and a[1] <= b[1] + 1e-12 for a, b in zip(pts, pts[1:]))


# --- Brier / NLL ---


def test_brier_examples_and_oracle(rng):
    assert cm.brier([1, 0], [1.0, 0.0]) == 0.0
    assert cm.brier([1, 0], [0.0, 1.0]) == 1.0
    assert cm.brier([1], [0.7]) == pytest.approx(0.09, rel=1e-12)
    y, p = random_cohort(rng)
    assert cm.brier(y, p) == pytest.approx(oracles.brier(y.tolist(), p.tolist()), rel=1e-12)


def test_nll_floor_keeps_finite():
    assert np.isfinite(cm.nll([1, 0], [0.0, 1.0]))


# --- temperature scaling ---


def calibrated_group_cohort():
    """Logit groups where sigmoid(z) exactly matches the group positive rate,
    making T = 1 the exact NLL minimizer."""
    labels, logits = [], []
    for k, m in ((1, 4), (2, 4), (3, 4)):
        z = float(np.log(k / (m - k)))
        labels += [1] * k + [0] * (m - k)
        logits += [z] * m
    return np.array(labels), np.array(logits)


def test_temperature_identity_when_calibrated():
    y, z = calibrated_group_cohort()
    t = cm.temperature_scale(y, z)
    assert t == pytest.approx(1.0, abs=2e-4)


def test_temperature_softens_overconfident():
    y, z = calibrated_group_cohort()
    t = cm.temperature_scale(y, z * 5.0)  # overconfident: needs T > 1
    assert t == pytest.approx(5.0, rel=0.01)


def test_temperature_sharpens_underconfident():
    y, z = calibrated_group_cohort()
    t = cm.temperature_scale(y, z / 4.0)
    assert t == pytest.approx(0.25, rel=0.02)


def test_temperature_never_increases_nll(rng):
    for _ in range(20):
        n = int(rng.integers(8, 40))
        y = rng.integers(0, 2, n)
        if len(np.unique(y)) < 2:
            continue
        z = rng.normal(0, 2, n)
        t = cm.temperature_scale(y, z)
        assert cm.nll(y, cm.sigmoid(z / t)) <= cm.nll(y, cm.sigmoid(z)) + 1e-12
        # a monotone transform never changes the ranking
        assert cm.roc_auc(y, cm.sigmoid(z / t)) == pytest.approx(cm.roc_auc(y, z), abs=1e-12)


def test_temperature_single_class_raises():
    with pytest.raises(DegenerateLogits):
        cm.temperature_scale([1, 1], [0.2, 0.4])


# --- threshold selection ---


def test_threshold_separable():
    y = [0, 0, 1, 1]
    p = [0.1, 0.2, 0.8, 0.9]
    t = cm.select_threshold(y, p)
    assert t == pytest.approx(0.5)  # midpoint of 0.2 and 0.8
    r = cm.basic_rates(cm.confusion(y, p, t))
    assert r["tpr"] == 1.0 and r["fpr"] == 0.0


def test_threshold_constant_scores():
    assert cm.select_threshold([0, 1, 0], [0.4, 0.4, 0.4]) == 0.5


def test_threshold_tie_breaks_toward_half():
    # J = 1 at every midpoint between the two clusters
    y = [0, 1]
    p = [0.1, 0.9]
    assert cm.select_threshold(y, p) == pytest.approx(0.5)


def test_threshold_maximizes_youden_exhaustively(rng):
    for _ in range(20):
        y, p = random_cohort(rng, n=25)
        t = cm.select_threshold(y, p)
        r = cm.basic_rates(cm.confusion(y, p, t))
        best = r["tpr"] - r["fpr"]
        for cand in np.linspace(0, 1, 101):
            rc = cm.basic_rates(cm.confusion(y, p, cand))
            assert rc["tpr"] - rc["fpr"] <= best + 1e-12


# --- report ---


def test_classification_report_shape(rng):
    y, p = random_cohort(rng)
    rep = cm.classification_report(y, p, threshold=0.4, temperature=1.5)
    assert set(rep) == {"roc_auc", "accuracy", "macro_f1", "brier", "confusion", "threshold", "temperature"}
    assert set(rep["confusion"]) == {"tp", "tn", "fp", "fn"}
    assert rep["threshold"] == 0.4 and rep["temperature"] == 1.5
    assert rep["roc_auc"] == cm.roc_auc(y, p)
