import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ou_trend_lan.model_core import ModelParams, PolynomialTrend, eval_trend
from ou_trend_lan.ou_sim import (RngSpec, brownian_increments, grid_size, ou_transition,
                                 simulate_observation, simulate_ou)


def test_noise_free_decay():
    x = simulate_ou(1.0, 0.0, 1.0, 2.0, 0.01, RngSpec(3))["X"]
    assert np.allclose(x, np.exp(-np.arange(x.size) * 0.01), rtol=1e-12)


def test_stationary_variance():
    x = simulate_ou(1.0, 1.0, 0.0, 5000.0, 0.01, RngSpec(11))["X"]
    assert abs(x.var() / 0.5 - 1) < 0.05


@pytest.mark.parametrize("x0", [0.0, 1.5])
def test_one_step_law_matches_exact_transition(x0):
    # 1e5 independent one-step draws against the closed-form Gaussian transition
    tau, c, delta, m = 2.0, 3.0, 0.1, 100_000
    ends = np.array([simulate_ou(tau, c, x0, delta, delta, RngSpec(5, r))["X"][1] for r in range(m)])
    mean, var = math.exp(-0.2) * x0, 3 * (1 - math.exp(-0.4)) / 4
    assert abs(ends.mean() - mean) < 3 * math.sqrt(var / m)
    # variance of the sample variance of a Gaussian is 2 var**2 / (m - 1)
    assert abs(ends.var(ddof=1) - var) < 3 * var * math.sqrt(2 / (m - 1))


def test_transition_coefficients():
    a, s = ou_transition(2.0, 3.0, 0.1)
    assert a == pytest.approx(math.exp(-0.2), rel=1e-15)
    assert s**2 == pytest.approx(3 * (1 - math.exp(-0.4)) / 4, rel=1e-14)


def test_noiseless_observation_is_trend():
    params = ModelParams(PolynomialTrend((1.0, -0.5, 0.25)), 1.0, 0.0)
    path = simulate_observation(params, 10.0, 0.01, RngSpec(1))
    assert np.array_equal(path["Y"], eval_trend(params.trend, path.times))
    assert "dW" not in path


def test_observation_shares_stream_with_ou():
    params = ModelParams(PolynomialTrend((0.0, 1.0)), 1.0, 1.0, x0=0.3)
    path = simulate_observation(params, 50.0, 0.01, RngSpec(9, 4))
    x = simulate_ou(1.0, 1.0, 0.3, 50.0, 0.01, RngSpec(9, 4))["X"]
    assert np.array_equal(path["X"], x)
    assert np.max(np.abs(path["Y"] - path["X"] - path.times)) < 1e-12


def test_mean_square_residual_converges():
    params = ModelParams(PolynomialTrend((0.0, 1.0)), 1.0, 1.0)
    path = simulate_observation(params, 2000.0, 0.01, RngSpec(21))
    resid = path["Y"] - path.times
    assert abs(np.trapezoid(resid**2, dx=0.01) / 2000.0 / 0.5 - 1) < 0.1


def test_brownian_increments_consistent_with_x():
    tau, c, delta = 1.3, 0.7, 0.01
    x = simulate_ou(tau, c, 0.2, 10.0, delta, RngSpec(2))["X"]
    dw = brownian_increments(x, tau, c, delta)
    assert dw[0] == 0
    # Ito sums against sqrt(c) dW and dX + tau X dt coincide term by term
    assert np.allclose(math.sqrt(c) * dw[1:], np.diff(x) + tau * x[:-1] * delta, rtol=0, atol=1e-14)
    z = dw[1:] / math.sqrt(delta)
    assert abs(z.mean()) < 4 / math.sqrt(z.size) and abs(z.var() - 1) < 0.05


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_streams_are_pure_functions_of_the_key(seed, index):
    a = RngSpec(seed, index).generator().standard_normal(5)
    b = RngSpec(seed, index).generator().standard_normal(5)
    assert np.array_equal(a, b)


def test_distinct_streams_differ_and_threads_agree():
    keys = [RngSpec(7, r) for r in range(8)]
    serial = [simulate_ou(1, 1, 0, 20.0, 0.01, k)["X"] for k in keys]
    with ThreadPoolExecutor(4) as pool:
        threaded = list(pool.map(lambda k: simulate_ou(1, 1, 0, 20.0, 0.01, k)["X"], keys))
    assert all(np.array_equal(a, b) for a, b in zip(serial, threaded))
    assert not np.array_equal(serial[0], serial[1])


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        simulate_ou(0.0, 1, 0, 1.0, 0.01, RngSpec(0))
    with pytest.raises(ValueError):
        simulate_ou(1.0, 1, 0, 1.0, -0.01, RngSpec(0))
    with pytest.raises(ValueError):
        simulate_ou(float("nan"), 1, 0, 1.0, 0.01, RngSpec(0))
    with pytest.raises(ValueError):
        grid_size(1.0, 0.3)
    with pytest.raises(ValueError):
        RngSpec(-1)
    assert grid_size(1.0, 0.01) == 100
