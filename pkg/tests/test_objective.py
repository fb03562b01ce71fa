"""Objective estimators against hand-computed and brute-force oracles.

Every vectorized estimator here is checked against a naive reimplementation
(explicit loops over the defining formula) or an exactly computable value.
"""

import numpy as np
import pytest

from edmap import nn_core, objective
from edmap.grf import ScalarPrior
from edmap.nn_core import ArchDescriptor
from edmap.objective import (
    LossConfig,
    energy_distance_sq,
    energy_score,
    j_n_full,
    lemma_identities_check,
    minibatch_loss_and_grad,
)
from edmap.transport import TransportModel


# ---------------------------------------------------------------------------
# the 1-d fast paths


def test_within_mean_1d_matches_brute_force():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(37)
    diffs = np.abs(x[:, None] - x[None, :])
    brute = diffs.sum() / (37 * 36)  # diagonal is zero
    assert objective._within_mean_1d(x) == pytest.approx(brute, rel=1e-12)


def test_cross_mean_1d_matches_brute_force():
    rng = np.random.default_rng(1)
    a = rng.standard_normal(23)
    b = rng.standard_normal(41) + 0.7
    brute = np.mean(np.abs(a[:, None] - b[None, :]))
    assert objective._cross_mean_1d(a, b) == pytest.approx(brute, rel=1e-12)


# ---------------------------------------------------------------------------
# energy distance


def test_energy_distance_sq_hand_computed():
    # a = {0, 1}, b = {3, 5}: cross mean 3.5, within means 1 and 2
    val = energy_distance_sq(np.array([0.0, 1.0]), np.array([3.0, 5.0]))
    assert val == pytest.approx(2 * 3.5 - 1.0 - 2.0, abs=1e-14)


def test_energy_distance_sq_identical_clouds_estimator_mix():
    # same cloud twice: the V-statistic cross term against the U-statistic
    # within terms leaves exactly -2 S / (n^2 (n-1)), S = sum_{i != j} |x_i - x_j|
    rng = np.random.default_rng(2)
    x = rng.standard_normal(500)
    s = np.sum(np.abs(x[:, None] - x[None, :]))
    expected = -2.0 * s / (500**2 * 499)
    assert energy_distance_sq(x, x) == pytest.approx(expected, rel=1e-10)


def test_energy_distance_sq_independent_same_law_near_zero():
    rng = np.random.default_rng(20)
    a = rng.standard_normal(4000)
    b = rng.standard_normal(4000)
    assert abs(energy_distance_sq(a, b)) < 0.01


def test_energy_distance_sq_population_value():
    # X ~ N(0,1), Y ~ N(1,1): all three terms have closed forms through
    # E|N(mu, 2)| = sqrt(2)*sqrt(2/pi)*exp(-mu^2/4) + mu*(1 - 2*Phi(-mu/sqrt(2)))
    from scipy.stats import norm as normal

    def folded(mu, sigma):
        return sigma * np.sqrt(2 / np.pi) * np.exp(
            -(mu**2) / (2 * sigma**2)
        ) + mu * (1 - 2 * normal.cdf(-mu / sigma))

    pop = 2 * folded(1.0, np.sqrt(2)) - 2 * folded(0.0, np.sqrt(2))
    vals = []
    for seed in range(4):
        rng = np.random.default_rng(30 + seed)
        a = rng.standard_normal(60_000)
        b = rng.standard_normal(60_000) + 1.0
        vals.append(energy_distance_sq(a, b))
    assert np.mean(vals) == pytest.approx(pop, abs=0.01)


def test_energy_distance_sq_1d_path_equals_generic_path():
    # padding a zero coordinate routes the same data through the kernels
    rng = np.random.default_rng(4)
    a = rng.standard_normal(80)
    b = rng.standard_normal(60) + 0.5
    a2 = np.column_stack([a, np.zeros(80)])
    b2 = np.column_stack([b, np.zeros(60)])
    assert energy_distance_sq(a, b) == pytest.approx(
        energy_distance_sq(a2, b2), rel=1e-10
    )


def test_energy_distance_sq_u_norm_scaling():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((50, 4))
    b = rng.standard_normal((70, 4)) + 0.3
    assert energy_distance_sq(a, b, norm="u") == pytest.approx(
        energy_distance_sq(a, b) / 2.0, rel=1e-12
    )


def test_energy_distance_sq_singleton_warns():
    with pytest.warns(RuntimeWarning, match="singleton"):
        energy_distance_sq(np.array([0.0, 1.0]), np.array([2.0]))


def test_energy_distance_sq_validation():
    with pytest.raises(ValueError):
        energy_distance_sq(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        energy_distance_sq(np.zeros(3), np.zeros(3), norm="L2")


# ---------------------------------------------------------------------------
# energy score


def test_energy_score_hand_computed():
    forecast = np.array([0.0, 2.0])
    # outcome at the median: cross 1, within 2 -> score 0
    assert energy_score(forecast, 1.0) == pytest.approx(0.0, abs=1e-14)
    # outcome outside: cross (3+1)/2 = 2 -> score 1
    assert energy_score(forecast, 3.0) == pytest.approx(1.0, abs=1e-14)


def test_energy_score_rewards_correct_forecast():
    # mean score is minimized (in expectation) by forecasting the true law
    rng = np.random.default_rng(6)
    outcomes = rng.standard_normal(400)
    good = rng.standard_normal(2000)
    bad = rng.standard_normal(2000) + 2.0
    s_good = np.mean([energy_score(good, o) for o in outcomes])
    s_bad = np.mean([energy_score(bad, o) for o in outcomes])
    assert s_good < s_bad


def test_energy_score_validation():
    with pytest.raises(ValueError):
        energy_score(np.array([1.0]), 0.0)


# ---------------------------------------------------------------------------
# full-dataset objective


def test_j_n_full_identity_map_three_points():
    # N = 3, u = (0, 1, 2), T = identity: the estimator evaluates to 4/3
    u = np.array([0.0, 1.0, 2.0])
    y = np.zeros(3)
    val = j_n_full(lambda p, row: p, u, y)
    assert abs(val - 4.0 / 3.0) <= 1e-14


def test_j_n_full_matches_triple_loop():
    rng = np.random.default_rng(7)
    count = 12
    u = rng.standard_normal((count, 2))
    y = rng.standard_normal((count, 1))

    def map_fn(p, row):
        return p + 0.3 * np.sin(p + row[0])

    fast = j_n_full(map_fn, u, y)

    mapped = np.stack([map_fn(u, y[k]) for k in range(count)])  # (k, i, d)
    first = 0.0
    second = 0.0
    for j in range(count):
        for i in range(count):
            if i != j:
                first += np.linalg.norm(mapped[j, i] - u[j])
    for k in range(count):
        for i in range(count):
            for j in range(count):
                if i != j and i != k and j != k:
                    second += np.linalg.norm(mapped[k, i] - mapped[k, j])
    n = float(count)
    slow = 2 * first / (n * (n - 1)) - second / (n * (n - 1) * (n - 2))
    assert fast == pytest.approx(slow, rel=1e-12)


def test_j_n_full_accepts_transport_model():
    arch = ArchDescriptor(kind="mlp", depth=2, width=6, d_in=2, d_out=1)
    theta = nn_core.init_params(arch, np.random.default_rng(8))
    model = TransportModel(
        variant="mlp_residual", arch=arch, theta=theta, prior=ScalarPrior()
    )
    rng = np.random.default_rng(9)
    u = rng.standard_normal((10, 1))
    y = rng.standard_normal((10, 1))

    via_model = j_n_full(model, u, y)
    via_callable = j_n_full(
        lambda p, row: model.apply_batch(
            p, np.broadcast_to(row, (p.shape[0], 1))
        ),
        u,
        y,
    )
    assert via_model == pytest.approx(via_callable, rel=1e-14)


def test_j_n_full_validation():
    u = np.zeros((2, 1))
    with pytest.raises(ValueError):
        j_n_full(lambda p, row: p, u, np.zeros((2, 1)))  # too few
    big = np.zeros((201, 1))
    with pytest.raises(ValueError):
        j_n_full(lambda p, row: p, big, np.zeros((201, 1)))  # over the cap
    with pytest.raises(ValueError):
        j_n_full(lambda p, row: p, np.zeros((5, 1)), np.zeros((4, 1)))


# ---------------------------------------------------------------------------
# minibatch estimator


def _tiny_model(seed=0):
    arch = ArchDescriptor(kind="mlp", depth=2, width=8, d_in=2, d_out=1)
    theta = nn_core.init_params(arch, np.random.default_rng(seed))
    return TransportModel(
        variant="mlp_residual", arch=arch, theta=theta, prior=ScalarPrior()
    )


def test_minibatch_loss_matches_naive_loops():
    model = _tiny_model(seed=10)
    rng = np.random.default_rng(11)
    b, m = 3, 4
    batch_u = rng.standard_normal((b, 1))
    batch_y = rng.standard_normal((b, 1))
    ref_p = rng.standard_normal((b, m, 1))
    cfg = LossConfig(m=m, batch_size=b, norm_eps=1e-8)

    loss, _ = minibatch_loss_and_grad(model, batch_u, batch_y, ref_p, cfg)

    def norm_eps(v):
        return np.sqrt(np.mean(v**2) + cfg.norm_eps**2)

    total = 0.0
    for j in range(b):
        mapped = np.array(
            [
                model.apply(ref_p[j, r], batch_y[j])
                for r in range(m)
            ]
        )
        attract = sum(norm_eps(mapped[r] - batch_u[j]) for r in range(m))
        repel = sum(
            norm_eps(mapped[r] - mapped[s])
            for r in range(m)
            for s in range(m)
            if r != s
        )
        total += (2.0 / m) * attract - repel / (m * (m - 1))
    assert loss == pytest.approx(total / b, rel=1e-10)


def test_minibatch_gradient_matches_finite_differences():
    model = _tiny_model(seed=12)
    rng = np.random.default_rng(13)
    b, m = 6, 4
    batch_u = rng.standard_normal((b, 1))
    batch_y = rng.standard_normal((b, 1))
    ref_p = rng.standard_normal((b, m, 1))
    cfg = LossConfig(m=m, batch_size=b)

    _, grad = minibatch_loss_and_grad(model, batch_u, batch_y, ref_p, cfg)

    def loss_fn(theta):
        val, _ = minibatch_loss_and_grad(
            model.with_theta(theta), batch_u, batch_y, ref_p, cfg
        )
        return val

    err = nn_core.gradient_check(loss_fn, model.theta, grad, rng, num_coords=60)
    assert err <= 1e-4


def test_minibatch_joint_reference_conditioning():
    # joint reference: the reference rows' own observations are prepended
    arch = ArchDescriptor(kind="mlp", depth=2, width=8, d_in=3, d_out=1)
    theta = nn_core.init_params(arch, np.random.default_rng(14))
    model = TransportModel(
        variant="mlp_residual", arch=arch, theta=theta, prior=ScalarPrior(),
        reference="joint",
    )
    rng = np.random.default_rng(15)
    b, m = 4, 3
    batch_u = rng.standard_normal((b, 1))
    batch_y = rng.standard_normal((b, 1))
    ref_p = rng.standard_normal((b, m, 1))
    ref_y = rng.standard_normal((b, m, 1))
    cfg = LossConfig(m=m, batch_size=b)

    loss, grad = minibatch_loss_and_grad(
        model, batch_u, batch_y, ref_p, cfg, ref_y=ref_y
    )
    assert np.isfinite(loss) and np.all(np.isfinite(grad))

    def loss_fn(theta):
        val, _ = minibatch_loss_and_grad(
            model.with_theta(theta), batch_u, batch_y, ref_p, cfg, ref_y=ref_y
        )
        return val

    err = nn_core.gradient_check(loss_fn, model.theta, grad, rng, num_coords=40)
    assert err <= 1e-4


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(m=1)
    with pytest.raises(ValueError):
        LossConfig(norm_eps=-1.0)


# ---------------------------------------------------------------------------
# exact identities


def test_lemma_identities_hold_exactly():
    report = lemma_identities_check()
    assert report["passed"]
    assert report["max_lj_drift"] <= 1e-12
    assert report["max_l_vs_es_drift"] <= 1e-12
    assert report["degenerate_max_drift"] <= 1e-12


def test_lemma_identities_report_content():
    report = lemma_identities_check(theta_grid=(0.0, 1.0))
    assert report["theta_grid"] == [0.0, 1.0]
    # C is the map-independent constant; positive for a non-degenerate joint
    assert report["c_const"] > 0
    # L is a weighted sum of squared energy distances, hence nonnegative
    assert all(v >= -1e-15 for v in report["l_values"])
    # J differs from L by exactly C at every theta
    np.testing.assert_allclose(
        np.array(report["j_values"]) - report["c_const"],
        report["l_values"],
        atol=1e-14,
    )
