"""Log-likelihood ratios, score, information process and the LAN remainder.

Likelihood ratios are evaluated on the simulation's own probability space:
stochastic integrals run against the stored Brownian increments ``dW`` (left
endpoint sums), Riemann integrals use the trapezoid rule.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import polynomial as P

from .estimators import trapezoid_weights
from .model_core import ModelParams, SamplePath, eval_trend, eval_trend_derivative, local_scale


def _window(path: SamplePath, horizon: float | None) -> int:
    """Number of grid steps covering ``[0, horizon]``."""
    if horizon is None:
        return path.n_steps
    steps = int(round(horizon / path.delta))
    if steps < 1 or steps > path.n_steps:
        raise ValueError(f"horizon {horizon} outside the path's range (0, {path.horizon}]")
    return steps


def _require_brownian(path: SamplePath) -> None:
    if "Y" not in path or "dW" not in path:
        raise ValueError("likelihood computations need channels 'Y' and 'dW'")


def log_likelihood_ratio(path: SamplePath, theta_prime: ModelParams, theta: ModelParams,
                         horizon: float | None = None) -> float:
    """``log L^{theta'/theta}`` over ``[0, horizon]`` for a path simulated under ``theta``."""
    _require_brownian(path)
    if theta_prime.c != theta.c:
        raise ValueError("c is known and must agree between the two parameters")
    if theta.c <= 0:
        raise ValueError("likelihood ratios need c > 0")
    if theta_prime.p != theta.p:
        raise ValueError("both parameters must have the same trend degree")
    steps = _window(path, horizon)
    t = path.times[: steps + 1]
    y = path["Y"][: steps + 1]
    dw = path["dW"][1 : steps + 1]
    d_coeffs = theta_prime.trend.as_array() - theta.trend.as_array()
    d_tau = theta_prime.tau - theta.tau
    d_trend = eval_trend(d_coeffs, t)
    x = y - eval_trend(theta.trend, t)
    # c * (gamma' - gamma) along the path
    drift_gap = (eval_trend_derivative(d_coeffs, t) + theta.tau * d_trend
                 - d_tau * x + d_tau * d_trend)
    integrand = drift_gap / math.sqrt(theta.c)
    martingale = float(np.dot(integrand[:-1], dw))
    bracket = float(np.dot(trapezoid_weights(t.size, path.delta), integrand**2))
    return martingale - 0.5 * bracket


def _score_polys(p: int, tau: float) -> list[np.ndarray]:
    """Coefficient arrays of ``tau`` and ``s**(j-1) * (j + tau*s)``, ``j = 1..p``."""
    polys = [np.array([tau])]
    for j in range(1, p + 1):
        coeffs = np.zeros(j + 1)
        coeffs[j - 1] = j
        coeffs[j] = tau
        polys.append(coeffs)
    return polys


def score_and_bracket(path: SamplePath, theta: ModelParams, n: float, t: float = 1.0):
    """Score ``S_{n,theta}(t)`` and information ``J_{n,theta}(t)`` on ``[0, t*n]``.

    Deterministic entries of ``J`` are integrated exactly; the entries involving
    ``X = Y - R`` use the trapezoid rule.
    """
    _require_brownian(path)
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    p, tau, c = theta.p, theta.tau, theta.c
    dim = p + 2
    if t == 0:
        return np.zeros(dim), np.zeros((dim, dim))
    steps = _window(path, t * n)
    s = path.times[: steps + 1]
    x = path["Y"][: steps + 1] - eval_trend(theta.trend, s)
    dw = path["dW"][1 : steps + 1]
    w = trapezoid_weights(s.size, path.delta)
    upper = s[-1]

    scale = local_scale(p, n)
    polys = _score_polys(p, tau)
    values = [P.polyval(s, coeffs) for coeffs in polys]

    score = np.empty(dim)
    for j, f in enumerate(values):
        score[j] = scale[j] * np.dot(f[:-1], dw)
    score[-1] = -scale[-1] * np.dot(x[:-1], dw)
    score /= math.sqrt(c)

    bracket = np.empty((dim, dim))
    for i in range(p + 1):
        for j in range(i, p + 1):
            antideriv = P.polyint(P.polymul(polys[i], polys[j]))
            bracket[i, j] = bracket[j, i] = scale[i] * scale[j] * P.polyval(upper, antideriv)
        bracket[i, -1] = bracket[-1, i] = -scale[i] * scale[-1] * np.dot(w, values[i] * x)
    bracket[-1, -1] = scale[-1] ** 2 * np.dot(w, x * x)
    return score, bracket / c


def local_alternative(theta: ModelParams, h, n: float) -> ModelParams:
    """``theta + psi_n h`` as a parameter object (raises if it leaves the parameter space)."""
    h = np.asarray(h, dtype=float)
    if h.size != theta.p + 2:
        raise ValueError("h must have p + 2 entries")
    return ModelParams.from_vector(theta.theta + local_scale(theta.p, n) * h, theta.c, theta.x0)


def lan_remainder(path: SamplePath, theta: ModelParams, h, n: float, t: float = 1.0) -> float:
    """``log L^{(theta + psi_n h)/theta}_{tn} - (h'S - h'Jh/2)``."""
    h = np.asarray(h, dtype=float)
    if not np.any(h):
        return 0.0
    alt = local_alternative(theta, h, n)
    score, bracket = score_and_bracket(path, theta, n, t)
    return log_likelihood_ratio(path, alt, theta, t * n) - (h @ score - 0.5 * h @ bracket @ h)
