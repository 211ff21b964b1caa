import numpy as np
import pytest

import oracles
from gliopipe import seg_math as sm


def onehot_from_classes(classes, n_classes=4):
    classes = np.asarray(classes)
    out = np.zeros((n_classes,) + classes.shape, dtype=np.float64)
    for c in range(n_classes):
        out[c] = classes == c
    return out


# --- softmax / cross-entropy ---


def test_softmax_sums_to_one_and_is_shift_invariant(rng):
    z = rng.normal(size=(4, 3, 3, 3))
    p = sm.softmax_logits(z)
    np.testing.assert_allclose(p.sum(axis=0), 1.0, rtol=1e-12)
    np.testing.assert_allclose(sm.softmax_logits(z + 1000.0), p, rtol=1e-9)


def test_cross_entropy_uniform_logits_is_ln4():
    z = np.zeros((4, 2, 2, 2))
    y = onehot_from_classes(np.zeros((2, 2, 2), int))
    assert sm.cross_entropy(z, y) == pytest.approx(np.log(4.0), rel=1e-12)


def test_cross_entropy_confident_correct_is_small():
    y = onehot_from_classes(np.full((2, 2, 2), 3))
    z = np.zeros((4, 2, 2, 2))
    z[3] = 50.0
    assert sm.cross_entropy(z, y) < 1e-12


def test_cross_entropy_matches_oracle(rng):
    z = rng.normal(size=(4, 3, 3, 3))
    y = onehot_from_classes(rng.integers(0, 4, (3, 3, 3)))
    assert sm.cross_entropy(z, y) == pytest.approx(oracles.cross_entropy(z, y), rel=1e-9)


# --- soft dice ---


def test_soft_dice_perfect_prediction(rng):
    y = onehot_from_classes(rng.integers(0, 4, (4, 4, 4)))
    assert sm.soft_dice_loss(y, y) == pytest.approx(0.0, abs=1e-6)


def test_soft_dice_empty_class_convention():
    # no voxels of any foreground class and no predicted mass: each term is eps/eps = 1
    y = onehot_from_classes(np.zeros((3, 3, 3), int))
    assert sm.soft_dice_loss(y, y) == pytest.approx(0.0, abs=1e-12)


def test_soft_dice_matches_oracle(rng):
    p = sm.softmax_logits(rng.normal(size=(4, 3, 3, 3)))
    y = onehot_from_classes(rng.integers(0, 4, (3, 3, 3)))
    assert sm.soft_dice_loss(p, y) == pytest.approx(oracles.soft_dice_loss(p, y), rel=1e-9)


# --- boundary regularizer ---


def test_boundary_regularizer_worked_example():
    # 3-cube of foreground inside a 5-cube: dilation 81 voxels, erosion 1
    classes = np.zeros((5, 5, 5), int)
    classes[1:4, 1:4, 1:4] = 1
    y = onehot_from_classes(classes)
    assert sm.boundary_regularizer(y) == pytest.approx(80.0 / 125.0, rel=1e-12)


def test_boundary_regularizer_matches_oracle(rng):
    y = onehot_from_classes(rng.integers(0, 4, (5, 5, 5)))
    assert sm.boundary_regularizer(y) == pytest.approx(oracles.boundary_regularizer(y), rel=1e-9)


def test_boundary_regularizer_probs_variant(rng):
    classes = np.zeros((5, 5, 5), int)
    classes[2, 2, 2] = 3
    y = onehot_from_classes(classes)
    p = np.zeros((4, 5, 5, 5))
    p[0] = 1.0  # confident background everywhere
    assert sm.boundary_regularizer(y, probs=p) == 0.0
    assert sm.boundary_regularizer(y) > 0.0


# --- ramp schedule ---


def test_ramp_endpoints_and_midpoint():
    sched = sm.RampSchedule(lambda_max=0.3, total_epochs=100)
    assert sm.ramp(0, sched) == 0.0
    assert sm.ramp(100, sched) == pytest.approx(0.3, rel=1e-12)
    assert sm.ramp(50, sched) == pytest.approx(0.15, rel=1e-12)


def test_ramp_monotone():
    sched = sm.RampSchedule()
    vals = [sm.ramp(e, sched) for e in range(0, 101, 5)]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_seg_loss_composition(rng):
    z = rng.normal(size=(4, 4, 4, 4))
    y = onehot_from_classes(rng.integers(0, 4, (4, 4, 4)))
    sched = sm.RampSchedule()
    p = sm.softmax_logits(z)
    expected = (
        sm.cross_entropy(z, y)
        + sm.soft_dice_loss(p, y)
        + sm.ramp(30, sched) * sm.boundary_regularizer(y)
    )
    assert sm.seg_loss(z, y, 30, sched) == pytest.approx(expected, rel=1e-12)


# --- ensemble loss ---


def test_ensemble_loss_bce_only():
    got = sm.ensemble_loss([0.8, 0.6], y=1)
    want = -np.log(0.8) - np.log(0.6)
    assert got == pytest.approx(want, rel=1e-12)


def test_ensemble_loss_matches_oracle(rng):
    ps = rng.uniform(0.05, 0.95, 5)
    got = sm.ensemble_loss(ps, y=0, lambda_var=0.2, lambda_jsd=0.1)
    want = oracles.ensemble_loss(ps, 0, 0.2, 0.1)
    assert got == pytest.approx(want, rel=1e-9)


def test_agreeing_heads_no_penalty():
    base = sm.ensemble_loss([0.7, 0.7, 0.7], y=1)
    with_pen = sm.ensemble_loss([0.7, 0.7, 0.7], y=1, lambda_var=1.0, lambda_jsd=1.0)
    assert with_pen == pytest.approx(base, abs=1e-12)


def test_jsd_bounded_by_ln2(rng):
    for _ in range(50):
        ps = rng.uniform(0, 1, int(rng.integers(2, 6)))
        j = sm.jensen_shannon(ps)
        assert 0.0 <= j <= np.log(2.0) + 1e-12
    assert sm.jensen_shannon(np.array([0.0, 1.0])) == pytest.approx(np.log(2.0), rel=1e-6)


# --- dice evaluation ---


def test_dice_identical_and_disjoint():
    a = np.zeros((4, 4, 4), bool)
    a[:2] = True
    b = np.zeros((4, 4, 4), bool)
    b[2:] = True
    assert sm.dice_coefficient(a, a) == pytest.approx(1.0, rel=1e-6)
    assert sm.dice_coefficient(a, b) == 0.0
    assert sm.dice_coefficient(np.zeros((2, 2, 2), bool), np.zeros((2, 2, 2), bool)) == 1.0


def test_dice_matches_oracle(rng):
    a = rng.random((6, 6, 6)) > 0.5
    b = rng.random((6, 6, 6)) > 0.5
    assert sm.dice_coefficient(a, b) == pytest.approx(oracles.dice(a, b), rel=1e-12)


def test_dice_eval_regions(rng):
    labels = rng.choice([0, 1, 2, 4], (6, 6, 6)).astype(np.int16)
    out = sm.dice_eval(labels, labels)
    for r in ("et", "tc", "wt"):
        assert out[r] == pytest.approx(1.0, rel=1e-6)
    assert out["macro"] == pytest.approx((out["et"] + out["tc"] + out["wt"]) / 3.0, rel=1e-12)


# --- surfaces and HD95 ---


def test_surface_voxels_cube():
    m = np.zeros((5, 5, 5), bool)
    m[1:4, 1:4, 1:4] = True
    surf = sm.surface_voxels(m)
    assert len(surf) == 26  # all but the center voxel of the 3-cube
    assert not any((s == [2, 2, 2]).all() for s in surf)


def test_surface_voxels_border_counts():
    m = np.ones((3, 3, 3), bool)
    assert len(sm.surface_voxels(m)) == 26


def test_hd95_shifted_slabs():
    a = np.zeros((10, 10, 10), bool)
    b = np.zeros((10, 10, 10), bool)
    a[2, :, :] = True
    b[5, :, :] = True
    assert sm.hd95(a, b, (1.0, 1.0, 1.0)) == pytest.approx(3.0, abs=1e-9)
    assert sm.hd95(a, b, (2.0, 1.0, 1.0)) == pytest.approx(6.0, abs=1e-9)


def test_hd95_identical_is_zero(rng):
    m = rng.random((6, 6, 6)) > 0.5
    if not m.any():
        m[0, 0, 0] = True
    assert sm.hd95(m, m, (1.0, 1.0, 1.0)) == 0.0


def test_hd95_empty_is_none():
    m = np.ones((3, 3, 3), bool)
    e = np.zeros((3, 3, 3), bool)
    assert sm.hd95(m, e, (1, 1, 1)) is None
    assert sm.hd95(e, m, (1, 1, 1)) is None
    assert sm.hd95(e, e, (1, 1, 1)) is None


@pytest.mark.parametrize("seed", range(8))
def test_hd95_matches_pairwise_oracle(seed):
    rng = np.random.default_rng(7000 + seed)
    a = rng.random((7, 7, 7)) > 0.6
    b = rng.random((7, 7, 7)) > 0.6
    if not a.any():
        a[3, 3, 3] = True
    if not b.any():
        b[1, 1, 1] = True
    spacing = tuple(rng.uniform(0.5, 3.0, 3))
    got = sm.hd95(a, b, spacing)
    want = oracles.hd95(a, b, spacing)
    assert got == pytest.approx(want, abs=1e-6)


def test_hd95_report_regions(rng):
    labels = np.zeros((8, 8, 8), np.int16)
    labels[2:6, 2:6, 2:6] = 2  # WT only: ET and TC empty
    rep = sm.hd95_report(labels, labels, (1, 1, 1))
    assert rep["wt"] == 0.0
    assert rep["et"] is None and rep["tc"] is None
    assert rep["undefined_count"] == 2
    assert rep["average"] == 0.0
