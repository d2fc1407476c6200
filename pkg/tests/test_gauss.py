from __future__ import annotations

import numpy as np
import pytest

from sonocoach.gauss import (DiagGaussian, gaussian_kl, gaussian_log_prob,
                             squash_action, tanh_log_det)


def test_standard_normal_at_zero():
    lp = gaussian_log_prob(np.zeros(1), np.zeros(1), np.zeros(1))
    assert lp[0] == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)


def test_log_prob_maximal_at_mean():
    rng = np.random.default_rng(3)
    mean = rng.normal(size=4)
    log_std = rng.normal(scale=0.3, size=4)
    at_mean = gaussian_log_prob(mean, log_std, mean)[0]
    for _ in range(200):
        x = mean + rng.normal(scale=2.0, size=4)
        assert gaussian_log_prob(mean, log_std, x)[0] <= at_mean + 1e-12


def test_doubling_std_drops_log_prob_by_ln2_per_dim():
    mean = np.zeros(3)
    a = gaussian_log_prob(mean, np.zeros(3), mean)[0]
    b = gaussian_log_prob(mean, np.full(3, np.log(2.0)), mean)[0]
    assert a - b == pytest.approx(3 * np.log(2.0), abs=1e-12)


def test_log_prob_matches_quadrature_normalization():
    # density integrates to 1 on a fine grid (1-d sanity on the formula)
    xs = np.linspace(-12, 12, 200001)
    lp = gaussian_log_prob(np.array([[0.3]]), np.array([[np.log(0.7)]]),
                           xs[:, None])
    total = np.trapezoid(np.exp(lp), xs)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_kl_identity_is_zero():
    rng = np.random.default_rng(0)
    m = rng.normal(size=5)
    s = rng.normal(scale=0.4, size=5)
    assert abs(gaussian_kl(m, s, m, s)[0]) < 1e-12


def test_kl_scalar_unit_variance_mean_shift():
    # KL(N(1,1) || N(0,1)) = 0.5 * (mu1 - mu0)^2
    kl = gaussian_kl(np.array([1.0]), np.array([0.0]),
                     np.array([0.0]), np.array([0.0]))
    assert kl[0] == pytest.approx(0.5, abs=1e-12)


def test_kl_nonnegative_property_sweep():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        d = rng.integers(1, 6)
        mp, mq = rng.normal(size=d), rng.normal(size=d)
        sp, sq = rng.normal(scale=1.0, size=d), rng.normal(scale=1.0, size=d)
        assert gaussian_kl(mp, sp, mq, sq)[0] >= -1e-12


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(7)
    mp, sp = np.array([0.4, -0.2]), np.array([-0.3, 0.1])
    mq, sq = np.array([-0.1, 0.5]), np.array([0.2, -0.4])
    x = mp + np.exp(sp) * rng.standard_normal((200000, 2))
    mc = np.mean(gaussian_log_prob(mp, sp, x) - gaussian_log_prob(mq, sq, x))
    closed = gaussian_kl(mp, sp, mq, sq)[0]
    assert closed == pytest.approx(mc, rel=0.02)


def test_diag_gaussian_validates():
    with pytest.raises(ValueError):
        DiagGaussian(np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        DiagGaussian(np.zeros(2), np.array([0.0, np.inf]))
    d = DiagGaussian(np.zeros(2), np.log(np.array([0.5, 2.0])))
    assert d.std == pytest.approx(np.array([0.5, 2.0]))


def test_squash_zero_maps_to_midpoint():
    lo = np.array([-0.05, 5.0])
    hi = np.array([0.05, 30.0])
    a, _ = squash_action(np.zeros(2), lo, hi)
    assert a[0] == pytest.approx(np.array([0.0, 17.5]))


def test_squash_saturates_at_bounds():
    lo, hi = np.array([-1.0]), np.array([3.0])
    a, _ = squash_action(np.array([50.0]), lo, hi)
    assert a[0, 0] == pytest.approx(3.0, abs=1e-9)
    a, _ = squash_action(np.array([-50.0]), lo, hi)
    assert a[0, 0] == pytest.approx(-1.0, abs=1e-9)


def test_squash_respects_bounds_in_bulk():
    rng = np.random.default_rng(11)
    lo = np.array([-0.05, -0.03, -0.2, -0.2, -0.5, 5.0])
    hi = np.array([0.05, 0.03, 0.2, 0.2, 0.5, 30.0])
    raw = rng.normal(scale=5.0, size=(100_000, 6))
    a, _ = squash_action(raw, lo, hi)
    assert np.all(a >= lo) and np.all(a <= hi)
    # strictly interior wherever tanh is not saturated in float64
    mild = np.abs(raw) < 5.0
    assert np.all((a > lo)[mild]) and np.all((a < hi)[mild])


def test_squash_log_det_matches_numerical_change_of_variables():
    # bounded-space density of a = squash(u), u ~ N(0, 1), must integrate to 1
    lo, hi = np.array([-2.0]), np.array([0.5])
    us = np.linspace(-8, 8, 400001)[:, None]
    a, log_det = squash_action(us, lo, hi)
    lp_bounded = gaussian_log_prob(np.zeros(1), np.zeros(1), us) - log_det
    total = np.trapezoid(np.exp(lp_bounded), a[:, 0])
    assert total == pytest.approx(1.0, abs=1e-6)


def test_tanh_log_det_stable_for_large_inputs():
    u = np.array([[0.0, 30.0, -30.0]])
    val = tanh_log_det(u)
    assert np.isfinite(val[0])
    # each saturated dim contributes ~ log(1 - tanh^2) = log(4) - 2|u|
    expected = 0.0 + (np.log(4.0) - 60.0) * 2
    assert val[0] == pytest.approx(expected, abs=1e-6)


def test_squash_bounds_validation():
    with pytest.raises(ValueError):
        squash_action(np.zeros(2), np.array([0.0, 1.0]), np.array([1.0, 1.0]))
