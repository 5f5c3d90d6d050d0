import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import simpson

from ou_trend_lan import estimators
from ou_trend_lan.estimators import (DegenerateDenominatorError, IllConditionedError, estimate,
                                     estimate_hh, estimate_tau, hh_breve_tau, hh_breve_theta,
                                     ito_integral, lse_trend, riemann_moment, scaled_gram)
from ou_trend_lan.model_core import ModelParams, PolynomialTrend, SamplePath, eval_trend, hilbert_like_matrix
from ou_trend_lan.ou_sim import RngSpec, simulate_observation, simulate_ou


def _path(values, delta, name="Y"):
    return SamplePath(delta, {name: values})


def _ou_path(theta, tau=1.0, c=1.0, n=200.0, delta=0.01, seed=0, stream=0):
    params = ModelParams(PolynomialTrend(tuple(theta)), tau, c)
    return simulate_observation(params, n, delta, RngSpec(seed, stream))


# ---------------------------------------------------------------- primitives

def test_riemann_moment_examples():
    assert riemann_moment(_path(np.ones(201), 0.01), 0) == pytest.approx(2.0, rel=1e-14)
    s = np.linspace(0, 1, 1001)
    assert abs(riemann_moment(_path(s, 1e-3), 1) - 1 / 3) < 1e-6


def test_riemann_moment_against_simpson():
    path = _ou_path((0.0, 1.0), n=20.0, delta=0.001, seed=3)
    t = path.times
    for i in range(3):
        oracle = simpson(t**i * path["Y"], x=t)
        # both are O(delta^2) accurate for smooth integrands; on a rough OU
        # path they agree to the size of the local increments
        assert riemann_moment(path, i) == pytest.approx(oracle, rel=1e-3)
    smooth = _path(np.cos(np.linspace(0, 2, 2001)), 0.001)
    assert riemann_moment(smooth, 2) == pytest.approx(simpson(np.linspace(0, 2, 2001) ** 2 * smooth["Y"],
                                                              x=np.linspace(0, 2, 2001)), abs=1e-6)


def test_ito_integral_examples():
    z = simulate_ou(1.0, 1.0, 0.0, 10.0, 0.01, RngSpec(2))["X"]
    assert ito_integral(np.ones_like(z), z) == pytest.approx(z[-1] - z[0], abs=1e-12)
    s = np.linspace(0.0, 1.0, 10_001)
    assert abs(ito_integral(s, s**2) - 2 / 3) < 1e-3
    qv = np.sum(np.diff(z) ** 2)
    assert ito_integral(z, z) == pytest.approx((z[-1] ** 2 - z[0] ** 2 - qv) / 2, abs=1e-10)


def test_ito_integral_rejects_grid_mismatch():
    with pytest.raises(ValueError):
        ito_integral(np.ones(5), np.ones(6))
    with pytest.raises(ValueError):
        ito_integral(_path(np.ones(5), 0.1), _path(np.ones(5), 0.2))
    assert ito_integral(_path(np.arange(5.0), 0.1), _path(np.arange(5.0), 0.1)) == 6.0


def test_scaled_gram_converges_to_hilbert():
    for size in (101, 201):
        err = np.max(np.abs(scaled_gram(3, size) - hilbert_like_matrix(3, 1.0)))
        assert err < 0.5 / (size - 1) ** 2


# ---------------------------------------------------------------- trend estimator

@pytest.mark.parametrize("p", [0, 1, 2, 3])
def test_noiseless_recovery(p):
    theta = (0.5, -0.3, 0.2, 0.1)[: p] + (1.5,)
    path = _ou_path(theta, c=0.0, n=10.0, delta=1e-3)
    est = lse_trend(path, p)
    assert np.max(np.abs(est - theta) / np.abs(theta)) < 1e-6


def test_constant_model_is_time_average():
    path = _ou_path((2.0,), n=50.0, seed=4)
    assert lse_trend(path, 0)[0] == pytest.approx(riemann_moment(path, 0) / 50.0, rel=1e-13)


def _exact_trapezoid_normal_equations(path, p):
    # exact rational arithmetic on the unscaled trapezoid normal equations
    delta = Fraction(path.delta)
    t = [Fraction(float(v)) for v in path.times]
    y = [Fraction(float(v)) for v in path["Y"]]
    w = [delta] * len(t)
    w[0] = w[-1] = delta / 2
    gram = [[sum(wk * tk ** (i + j) for wk, tk in zip(w, t)) for j in range(p + 1)] for i in range(p + 1)]
    rhs = [sum(wk * tk**i * yk for wk, tk, yk in zip(w, t, y)) for i in range(p + 1)]
    a = [row[:] + [b] for row, b in zip(gram, rhs)]
    for col in range(p + 1):
        for row in range(col + 1, p + 1):
            f = a[row][col] / a[col][col]
            a[row] = [x - f * y_ for x, y_ in zip(a[row], a[col])]
    sol = [Fraction(0)] * (p + 1)
    for row in reversed(range(p + 1)):
        sol[row] = (a[row][-1] - sum(a[row][k] * sol[k] for k in range(row + 1, p + 1))) / a[row][row]
    return np.array([float(v) for v in sol])


def test_matches_exact_unscaled_normal_equations():
    path = _ou_path((0.2, 1.0), n=40.0, delta=0.01, seed=6)
    oracle = _exact_trapezoid_normal_equations(path, 1)
    assert np.allclose(lse_trend(path, 1), oracle, rtol=1e-8, atol=0)


def test_analytic_hilbert_solve_differs_only_by_quadrature():
    path = _ou_path((0.2, 1.0), n=200.0, delta=0.01, seed=6)
    moments = [riemann_moment(path, i) for i in range(2)]
    analytic = np.linalg.solve(hilbert_like_matrix(1, 200.0), moments)
    assert np.allclose(lse_trend(path, 1), analytic, rtol=1e-5)


@given(st.integers(0, 3), st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.integers(0, 50))
def test_equivariance_under_polynomial_shift(p, q, stream):
    path = _ou_path((0.0, 1.0), n=50.0, seed=8, stream=stream)
    q = np.array(q[: p + 1])
    shifted = _path(path["Y"] + eval_trend(q, path.times), path.delta)
    diff = lse_trend(shifted, p) - lse_trend(path, p)
    # coefficient j contributes up to |err_j| n**j on the window
    size = 1 + np.abs(shifted["Y"]).max()
    assert np.all(np.abs(diff - q) * 50.0 ** np.arange(p + 1) <= 1e-9 * size)


@given(st.floats(-50, 50), st.integers(0, 50))
def test_tau_invariant_under_constant_shift(const, stream):
    path = _ou_path((0.0, 1.0), n=50.0, seed=9, stream=stream)
    shifted = _path(path["Y"] + const, path.delta)
    a = estimate(path, 1).tau_hat
    b = estimate(shifted, 1).tau_hat
    assert b == pytest.approx(a, rel=1e-9)


def test_condition_guard(monkeypatch):
    path = _ou_path((0.0, 1.0), n=20.0)
    monkeypatch.setattr(estimators, "CONDITION_LIMIT", 10.0)
    with pytest.raises(IllConditionedError):
        lse_trend(path, 2)


# ---------------------------------------------------------------- tau estimator

def test_tau_reduces_to_classical_ou_estimator():
    x = simulate_ou(1.0, 1.0, 0.0, 300.0, 0.01, RngSpec(10))["X"]
    path = _path(x, 0.01)
    classical = -np.dot(x[:-1], np.diff(x)) / np.trapezoid(x**2, dx=0.01)
    assert estimate_tau(path, [0.0], 0) == pytest.approx(classical, rel=1e-10)


def test_tau_matches_the_moment_formula():
    path = _ou_path((0.4, 1.0), n=300.0, seed=13)
    theta = lse_trend(path, 1)
    t, y = path.times, path["Y"]
    numerator = sum(theta[i] * ito_integral(t**i, y) for i in range(2)) - ito_integral(y, y)
    gram = scaled_gram(1, y.size) * np.power(300.0, np.add.outer(np.arange(2), np.arange(2)) + 1)
    denominator = np.trapezoid(y**2, dx=path.delta) - theta @ gram @ theta
    # the moment form loses digits to cancellation in the denominator
    assert estimate_tau(path, theta, 1) == pytest.approx(numerator / denominator, rel=1e-6)


def test_tau_consistency_over_replications():
    taus = [estimate(_ou_path((0.0, 1.0), n=2000.0, seed=14, stream=r), 1).tau_hat for r in range(200)]
    assert abs(np.median(taus) - 1.0) < 0.05


def test_degenerate_and_nonpositive_flags():
    noiseless = _ou_path((0.0, 1.0), c=0.0, n=10.0)
    result = estimate(noiseless, 1)
    assert "degenerate_denominator" in result.flags and math.isnan(result.tau_hat) and not result.ok
    with pytest.raises(DegenerateDenominatorError):
        estimate_tau(noiseless, lse_trend(noiseless, 1), 1)
    explosive = _path(np.exp(0.5 * np.arange(2001) * 0.01), 0.01)
    flagged = estimate(explosive, 0)
    assert flagged.tau_hat <= 0 and flagged.flags == ("tau_nonpositive",)


def test_estimation_result_fields():
    path = _ou_path((0.0, 1.0), n=100.0)
    result = estimate(path, 1)
    assert result.ok and result.horizon == 100.0
    assert result.moment_vector == pytest.approx([riemann_moment(path, i) for i in range(2)], rel=1e-12)
    assert result.as_vector().shape == (3,)
    assert 1 <= result.condition_number < 100


# ---------------------------------------------------------------- neuron submodel

@given(st.floats(0.1, 20), st.floats(0.5, 50))
def test_breve_theta_recovers_a_line(theta, horizon):
    t = np.linspace(0, horizon, 2001)
    assert hh_breve_theta(_path(theta * t, t[1], "zeta")) == pytest.approx(theta, rel=1e-8)


def test_breve_theta_examples():
    s = np.linspace(0, 1, 1001)
    assert hh_breve_theta(_path(s**2, 1e-3, "zeta")) == pytest.approx(0.75, rel=1e-5)
    assert hh_breve_theta(_path(6.0 * s * 10, 1e-2, "zeta")) == pytest.approx(6.0, rel=1e-8)


def test_breve_theta_is_least_squares_through_the_origin():
    x = simulate_ou(1.0, 1.0, 0.0, 100.0, 0.01, RngSpec(15))["X"]
    t = np.arange(x.size) * 0.01
    zeta = 3.0 * t + x
    w = np.sqrt(estimators.trapezoid_weights(t.size, 0.01))
    oracle = np.linalg.lstsq((w * t)[:, None], w * zeta, rcond=None)[0][0]
    assert hh_breve_theta(_path(zeta, 0.01, "zeta")) == pytest.approx(oracle, rel=1e-10)


def _line_plus_ou(theta, r, n=2000.0, tau=1.0, c=1.0):
    x = simulate_ou(tau, c, 0.0, n, 0.01, RngSpec(16, r))["X"]
    return _path(theta * np.arange(x.size) * 0.01 + x, 0.01, "zeta")


def test_breve_tau_consistency():
    taus = [estimate_hh(_line_plus_ou(6.0, r)).tau_hat for r in range(200)]
    assert abs(np.mean(taus) - 1.0) < 0.05


def test_breve_tau_slope_term_removes_excess_variance():
    # Without the slope term the rescaled error picks up a component of
    # variance theta^2 / c from int (zeta - theta s) ds, which has no reason to
    # vanish when the fit has no intercept.
    theta, n, m = 2.0, 2000.0, 300
    with_term, without = [], []
    for r in range(m):
        zeta = _line_plus_ou(theta, r)
        slope = hh_breve_theta(zeta)
        with_term.append(hh_breve_tau(zeta, slope))
        without.append(hh_breve_tau(zeta, slope, drift_term=False))
    var_with = np.var(np.sqrt(n) * (np.array(with_term) - 1.0), ddof=1)
    var_without = np.var(np.sqrt(n) * (np.array(without) - 1.0), ddof=1)
    assert abs(var_with / 2.0 - 1) < 0.2
    assert abs(var_without / (2.0 + theta**2) - 1) < 0.2


def test_halving_delta_moves_tau_far_less_than_its_spread():
    # The exact OU transition makes every second point of a delta/2 path an
    # exact delta path, so both grids see the same realisation.
    params = ModelParams(PolynomialTrend((0.0, 1.0)), 1.0, 1.0)
    fine_taus, coarse_taus = [], []
    for r in range(60):
        fine = simulate_observation(params, 2000.0, 0.005, RngSpec(17, r))
        coarse = _path(fine["Y"][::2], 0.01)
        fine_taus.append(estimate(fine, 1).tau_hat)
        coarse_taus.append(estimate(coarse, 1).tau_hat)
    spread = np.std(fine_taus, ddof=1)
    shift = np.mean(np.abs(np.array(fine_taus) - np.array(coarse_taus)))
    assert shift < 0.1 * spread, (shift, spread)
