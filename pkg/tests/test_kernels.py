"""Kernel-level checks: the compiled and plain-numpy flavors must agree.

Stepping/solve kernels (Thomas, wave) are written so both flavors evaluate
the same floating-point expressions in the same order, so we demand bitwise
equality.  The distance kernels use different summation orders (loops vs.
Gram matrices), so those are compared at roundoff tolerance.
"""

import numpy as np
import pytest

from edmap import kernels


def _rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Thomas solver


def test_thomas_matches_dense_solve():
    rng = _rng(11)
    n = 40
    lower = rng.standard_normal(n - 1)
    upper = rng.standard_normal(n - 1)
    diag = rng.uniform(6.0, 8.0, n)  # diagonally dominant
    rhs = rng.standard_normal(n)

    a = np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
    expected = np.linalg.solve(a, rhs)
    got = kernels.thomas_solve(lower, diag, upper, rhs)
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)


def test_thomas_identity_system():
    rhs = np.array([3.0, -1.0, 4.0, 1.5])
    out = kernels.thomas_solve(np.zeros(3), np.ones(4), np.zeros(3), rhs)
    np.testing.assert_array_equal(out, rhs)


def test_thomas_flavors_bitwise_identical():
    rng = _rng(12)
    n = 200
    lower = rng.standard_normal(n - 1)
    upper = rng.standard_normal(n - 1)
    diag = rng.uniform(5.0, 9.0, n)
    rhs = rng.standard_normal(n)
    a = kernels.thomas_solve_np(lower, diag, upper, rhs)
    b = (
        kernels.thomas_solve_nb(lower, diag, upper, rhs)
        if kernels.HAVE_NUMBA
        else kernels.thomas_solve(lower, diag, upper, rhs)
    )
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# wave stepping


def _wave_inputs(seed=3, n=96, steps=240):
    rng = _rng(seed)
    r = np.full(n, 0.2) + 0.05 * rng.uniform(size=n)
    src_t = np.sin(0.3 * np.arange(steps)) * np.exp(-0.01 * np.arange(steps))
    src_x = np.exp(-0.5 * ((np.arange(n) - n / 3) / 3.0) ** 2)
    return r, src_t, src_x, steps


def test_wave_field_flavors_bitwise_identical():
    r, src_t, src_x, steps = _wave_inputs()
    a = kernels.wave_field_np(r, src_t, src_x, steps)
    if kernels.HAVE_NUMBA:
        b = kernels.wave_field_nb(r, src_t, src_x, steps)
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, kernels.wave_field(r, src_t, src_x, steps))


def test_wave_records_match_field_interpolation():
    r, src_t, src_x, steps = _wave_inputs(seed=4)
    field = kernels.wave_field(r, src_t, src_x, steps)
    rec_i0 = np.array([5, 31, 70])
    rec_w = np.array([0.0, 0.25, 0.875])
    rec = kernels.wave_records(r, src_t, src_x, rec_i0, rec_w, steps)
    manual = (1.0 - rec_w) * field[:, rec_i0] + rec_w * field[:, rec_i0 + 1]
    np.testing.assert_array_equal(rec, manual)


def test_wave_records_flavors_bitwise_identical():
    r, src_t, src_x, steps = _wave_inputs(seed=5)
    rec_i0 = np.array([2, 48])
    rec_w = np.array([0.6, 0.1])
    a = kernels.wave_records_np(r, src_t, src_x, rec_i0, rec_w, steps)
    if kernels.HAVE_NUMBA:
        b = kernels.wave_records_nb(r, src_t, src_x, rec_i0, rec_w, steps)
        np.testing.assert_array_equal(a, b)


def test_wave_field_zero_source_stays_zero():
    n, steps = 50, 100
    out = kernels.wave_field(np.full(n, 0.3), np.zeros(steps), np.zeros(n), steps)
    assert np.all(out == 0.0)


# ---------------------------------------------------------------------------
# distance kernels


def test_cross_mean_distance_small_exact():
    a = np.array([[0.0], [2.0]])
    b = np.array([[1.0]])
    # |0-1| and |2-1| average to 1
    assert kernels.cross_mean_distance(a, b) == pytest.approx(1.0, abs=1e-15)


def test_within_mean_distance_three_points():
    a = np.array([[0.0], [1.0], [3.0]])
    # pair distances 1, 3, 2 -> mean 2
    assert kernels.within_mean_distance(a) == pytest.approx(2.0, abs=1e-14)


def test_distance_kernels_flavors_agree_to_roundoff():
    rng = _rng(20)
    a = rng.standard_normal((300, 24))
    b = rng.standard_normal((450, 24)) + 0.3
    cross_np = kernels.cross_mean_distance_np(a, b)
    within_np = kernels.within_mean_distance_np(a)
    if kernels.HAVE_NUMBA:
        assert kernels.cross_mean_distance_nb(a, b) == pytest.approx(
            cross_np, rel=1e-10
        )
        assert kernels.within_mean_distance_nb(a) == pytest.approx(
            within_np, rel=1e-10
        )
    assert kernels.cross_mean_distance(a, b) == pytest.approx(cross_np, rel=1e-10)
    assert kernels.within_mean_distance(a) == pytest.approx(within_np, rel=1e-10)


def test_within_mean_distance_singleton_is_zero():
    assert kernels.within_mean_distance(np.array([[1.5, 2.0]])) == 0.0


def test_cross_mean_distance_translation_invariant():
    rng = _rng(21)
    a = rng.standard_normal((64, 5))
    b = rng.standard_normal((80, 5))
    shift = rng.standard_normal(5)
    d0 = kernels.cross_mean_distance(a, b)
    d1 = kernels.cross_mean_distance(a + shift, b + shift)
    assert d1 == pytest.approx(d0, rel=1e-12)


def test_flavor_selection_reflects_environment():
    # USE_NUMBA is resolved at import from EDMAP_NO_NUMBA and availability.
    if kernels.USE_NUMBA:
        assert kernels.HAVE_NUMBA and not kernels.NUMBA_DISABLED
        assert kernels.cross_mean_distance is kernels.cross_mean_distance_nb
    else:
        assert kernels.cross_mean_distance is kernels.cross_mean_distance_np
