import numpy as np
import pytest

import oracles
from gliopipe.errors import DegenerateHistogram, EmptyRegion, NonPowerOfTwoDims
from gliopipe.volume import (
    Volume3D,
    dilate,
    erode,
    fft3,
    fill_holes_and_close,
    gaussian_smooth,
    ifft3,
    otsu_threshold,
    percentile,
    resample,
)


def vol(data, spacing=(1.0, 1.0, 1.0)):
    return Volume3D(np.asarray(data, dtype=np.float32), spacing)


# --- resample ---


def test_resample_identity():
    v = vol(np.arange(27).reshape(3, 3, 3))
    out = resample(v, (3, 3, 3))
    np.testing.assert_array_equal(out.data, v.data)


def test_resample_constant():
    v = vol(np.full((4, 5, 6), 3.25))
    out = resample(v, (7, 3, 9))
    np.testing.assert_allclose(out.data, 3.25, rtol=1e-6)


def test_resample_center_is_corner_mean():
    v = vol(np.arange(8).reshape(2, 2, 2))
    out = resample(v, (3, 3, 3))
    assert out.data[1, 1, 1] == pytest.approx(v.data.mean())


def test_resample_spacing_equation():
    v = vol(np.zeros((80, 80, 80)), spacing=(2.0, 2.0, 2.0))
    out = resample(v, (160, 160, 160))
    assert out.spacing == (1.0, 1.0, 1.0)


def test_nearest_preserves_value_set(rng):
    data = rng.choice([0.0, 2.0, 4.0], size=(6, 7, 8))
    out = resample(vol(data), (9, 5, 11), mode="nearest")
    assert set(np.unique(out.data)) <= set(np.unique(data))


def test_trilinear_stays_in_range(rng):
    data = rng.normal(size=(5, 6, 7))
    out = resample(vol(data), (11, 4, 9))
    assert out.data.min() >= data.min() - 1e-6
    assert out.data.max() <= data.max() + 1e-6


# --- gaussian ---


def test_gaussian_constant_unchanged():
    v = vol(np.full((8, 8, 8), 5.0))
    out = gaussian_smooth(v, 2.0)
    np.testing.assert_allclose(out.data, 5.0, atol=1e-6)


def test_gaussian_impulse_matches_kernel_product():
    n = 17
    data = np.zeros((n, n, n))
    data[8, 8, 8] = 1.0
    sigma = 1.5
    out = gaussian_smooth(vol(data), sigma)
    # direct separable kernel evaluation
    radius = int(np.floor(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    expected = k[:, None, None] * k[None, :, None] * k[None, None, :]
    got = out.data[8 - radius : 8 + radius + 1, 8 - radius : 8 + radius + 1, 8 - radius : 8 + radius + 1]
    np.testing.assert_allclose(got, expected, atol=1e-6)
    assert np.argmax(out.data) == np.ravel_multi_index((8, 8, 8), out.data.shape)


def test_gaussian_tiny_sigma_identity(rng):
    data = rng.normal(size=(5, 5, 5))
    out = gaussian_smooth(vol(data), 0.1)
    np.testing.assert_array_equal(out.data, data.astype(np.float32))


def test_gaussian_preserves_interior_mass(rng):
    data = np.zeros((24, 24, 24))
    data[8:16, 8:16, 8:16] = rng.uniform(1, 2, (8, 8, 8))
    out = gaussian_smooth(vol(data), 1.0)
    assert abs(out.data.sum() - data.sum()) / data.sum() < 0.005


# --- morphology ---


def test_dilate_single_voxel():
    m = np.zeros((5, 5, 5), bool)
    m[2, 2, 2] = True
    assert dilate(m).sum() == 7


def test_erode_single_voxel_empty():
    m = np.zeros((5, 5, 5), bool)
    m[2, 2, 2] = True
    assert erode(m).sum() == 0


def test_dilate_minus_erode_matches_bruteforce_cube():
    m = np.zeros((7, 7, 7), bool)
    m[2:5, 2:5, 2:5] = True
    grad = dilate(m).astype(int) - erode(m).astype(int)
    # brute-force 6-neighborhood scan
    expected = np.zeros_like(grad)
    for z in range(7):
        for y in range(7):
            for x in range(7):
                nb = [(z + 1, y, x), (z - 1, y, x), (z, y + 1, x), (z, y - 1, x), (z, y, x + 1), (z, y, x - 1)]
                inb = [q for q in nb if all(0 <= q[i] < 7 for i in range(3))]
                dil = m[z, y, x] or any(m[q] for q in inb)
                ero = m[z, y, x] and all(m[q] for q in inb) and len(inb) == 6
                expected[z, y, x] = int(dil) - int(ero)
    np.testing.assert_array_equal(grad, expected)


def test_morphology_duality_interior(rng):
    m = rng.random((9, 9, 9)) > 0.5
    m[0, :, :] = m[-1, :, :] = False
    m[:, 0, :] = m[:, -1, :] = False
    m[:, :, 0] = m[:, :, -1] = False
    inner = (slice(2, -2),) * 3
    lhs = erode(~m)
    rhs = ~dilate(m)
    np.testing.assert_array_equal(lhs[inner], rhs[inner])


# --- otsu ---


def test_otsu_bimodal():
    data = np.concatenate([np.zeros(32), np.full(32, 100.0)]).reshape(4, 4, 4)
    t = otsu_threshold(vol(data))
    assert 0 < t < 100


def test_otsu_four_values_matches_exhaustive():
    data = np.array([10.0, 11.0, 90.0, 91.0] * 16).reshape(4, 4, 4)
    t = otsu_threshold(vol(data))
    assert 11 < t < 90
    # exhaustive check over all 256 histogram cuts
    vals = data.ravel()
    hist, edges = np.histogram(vals, bins=256, range=(vals.min(), vals.max()))
    best, best_var = None, -1.0
    for cut in range(1, 256):
        left = vals[vals < edges[cut]]
        right = vals[vals >= edges[cut]]
        if len(left) == 0 or len(right) == 0:
            continue
        # compare on bin centers like the implementation
        centers = 0.5 * (edges[:-1] + edges[1:])
        w0 = hist[:cut].sum()
        w1 = hist[cut:].sum()
        if w0 == 0 or w1 == 0:
            continue
        m0 = (hist[:cut] * centers[:cut]).sum() / w0
        m1 = (hist[cut:] * centers[cut:]).sum() / w1
        v = w0 * w1 * (m0 - m1) ** 2
        if v > best_var:
            best_var, best = v, edges[cut]
    assert t == pytest.approx(best)


def test_otsu_constant_raises():
    with pytest.raises(DegenerateHistogram):
        otsu_threshold(vol(np.ones((3, 3, 3))))


# --- hole fill / close ---


def test_hollow_shell_filled():
    m = np.zeros((9, 9, 9), bool)
    m[2:7, 2:7, 2:7] = True
    m[3:6, 3:6, 3:6] = False
    out = fill_holes_and_close(m)
    assert out[2:7, 2:7, 2:7].all()


def test_border_open_concavity_not_filled():
    m = np.zeros((7, 7, 7), bool)
    m[1:6, 1:6, 1:6] = True
    m[0:4, 3, 3] = False  # channel open to the border
    out = fill_holes_and_close(m)
    assert not out[1, 3, 3]


def test_single_voxel_unchanged_by_closing():
    m = np.zeros((5, 5, 5), bool)
    m[2, 2, 2] = True
    np.testing.assert_array_equal(fill_holes_and_close(m), m)


# --- percentile ---


def test_percentile_linear_interpolation():
    vals = np.arange(1, 101, dtype=np.float64).reshape(4, 5, 5)
    assert percentile(vals, 1) == pytest.approx(1.99)
    assert percentile(vals, 100) == 100.0


def test_percentile_median():
    assert percentile(np.array([1.0, 2.0, 3.0]), 50) == 2.0


def test_percentile_monotone(rng):
    vals = rng.normal(size=200)
    ps = sorted(rng.uniform(0, 100, 20))
    out = [percentile(vals, p) for p in ps]
    assert all(a <= b + 1e-12 for a, b in zip(out, out[1:]))


def test_percentile_matches_oracle(rng):
    vals = rng.normal(size=37)
    for p in (0, 10, 33.3, 50, 95, 100):
        assert percentile(vals, p) == pytest.approx(oracles.linear_percentile(vals.tolist(), p), abs=1e-12)


def test_percentile_empty_region():
    with pytest.raises(EmptyRegion):
        percentile(np.ones((2, 2, 2)), 50, mask=np.zeros((2, 2, 2), bool))


# --- fft ---


def test_fft_constant_dc_only():
    n = 4
    spec = fft3(vol(np.full((n, n, n), 2.0)))
    assert spec[0, 0, 0] == pytest.approx(2.0 * n**3)
    spec[0, 0, 0] = 0
    assert np.abs(spec).max() < 1e-9


def test_fft_impulse_flat():
    data = np.zeros((4, 4, 4))
    data[0, 0, 0] = 1.0
    spec = fft3(vol(data))
    np.testing.assert_allclose(spec, 1.0, atol=1e-12)


def test_fft_matches_naive_dft(rng):
    data = rng.normal(size=(8, 8, 8))
    spec = fft3(vol(data))
    expected = oracles.naive_dft3(data)
    np.testing.assert_allclose(spec, expected, rtol=1e-4, atol=1e-6)


def test_fft_parseval_and_inverse(rng):
    data = rng.normal(size=(8, 8, 8))
    spec = fft3(vol(data))
    lhs = (np.abs(data) ** 2).sum()
    rhs = (np.abs(spec) ** 2).sum() / data.size
    assert abs(lhs - rhs) / lhs < 1e-4
    back = ifft3(spec).real
    np.testing.assert_allclose(back, data, rtol=1e-4, atol=1e-9)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(NonPowerOfTwoDims):
        fft3(vol(np.zeros((3, 4, 4))))
