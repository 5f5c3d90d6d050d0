"""Least-squares trend estimator, the tau estimator, and their neuron-model versions.

All Riemann integrals use the trapezoid rule on the path grid and all
stochastic integrals use left-endpoint (Ito) sums.

The normal-equation matrix is the Gram matrix of the monomials under the same
trapezoid rule as the moment vector, so a noise-free polynomial is recovered
exactly; it converges to ``hilbert_like_matrix(p, n)`` at rate ``O(delta**2)``
and obeys the same scaling identity. Solves always happen in the rescaled
frame where the matrix approaches ``hilbert_like_matrix(p, 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model_core import SamplePath, check_degree, eval_trend

CONDITION_LIMIT = 1e12

# Residual RMS below this fraction of the RMS of Y means the residual is
# rounding noise and the tau denominator carries no information.
DEGENERACY_RTOL = 1e-12


class EstimatorError(ArithmeticError):
    """An estimator cannot be evaluated on this path."""


class DegenerateDenominatorError(EstimatorError):
    pass


class IllConditionedError(EstimatorError):
    pass


@dataclass(frozen=True)
class EstimationResult:
    """Estimates from one path.

    ``theta_hat`` holds the trend coefficients; ``tau_hat`` is ``nan`` when the
    tau denominator is degenerate. ``flags`` may contain
    ``"degenerate_denominator"`` and ``"tau_nonpositive"``; tau is never clamped.
    """

    theta_hat: np.ndarray
    tau_hat: float
    horizon: float
    moment_vector: np.ndarray
    condition_number: float
    flags: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.flags

    def as_vector(self) -> np.ndarray:
        return np.append(self.theta_hat, self.tau_hat)


def _grid_array(x, name: str = "Y") -> np.ndarray:
    if isinstance(x, SamplePath):
        if name in x:
            return x[name]
        if len(x.channels) == 1:
            return next(iter(x.channels.values()))
        raise KeyError(f"path has no channel {name!r} and more than one channel")
    return np.asarray(x, dtype=float)


def trapezoid_weights(size: int, delta: float) -> np.ndarray:
    w = np.full(size, float(delta))
    w[0] = w[-1] = 0.5 * delta
    return w


def riemann_moment(path: SamplePath, i: int, channel: str = "Y") -> float:
    """Trapezoid value of ``int_0^n s**i Y_s ds``."""
    if i < 0:
        raise ValueError("moment order must be nonnegative")
    y = path[channel]
    w = trapezoid_weights(y.size, path.delta)
    return float(np.dot(w, path.times**i * y))


def ito_integral(integrand, integrator) -> float:
    """Left-endpoint sum ``sum_k g(t_k) (Z_{k+1} - Z_k)``.

    Arguments are single-channel sample paths on a common grid, or plain
    arrays of equal length.
    """
    if isinstance(integrand, SamplePath) and isinstance(integrator, SamplePath):
        if not math.isclose(integrand.delta, integrator.delta, rel_tol=1e-12):
            raise ValueError("integrand and integrator live on different grids")
    g = _grid_array(integrand)
    z = _grid_array(integrator)
    if g.shape != z.shape:
        raise ValueError("integrand and integrator live on different grids")
    return float(np.dot(g[:-1], np.diff(z)))


def scaled_gram(p: int, size: int) -> np.ndarray:
    """Trapezoid Gram matrix of ``u**i`` on the uniform grid of ``[0, 1]`` with ``size`` points."""
    u = np.linspace(0.0, 1.0, size)
    powers = np.vander(u, check_degree(p) + 1, increasing=True)
    w = trapezoid_weights(size, 1.0 / (size - 1))
    return powers.T @ (w[:, None] * powers)


def _scaled_moments(y: np.ndarray, delta: float, p: int) -> np.ndarray:
    size = y.size
    horizon = (size - 1) * delta
    u = np.linspace(0.0, 1.0, size)
    powers = np.vander(u, p + 1, increasing=True)
    w = trapezoid_weights(size, delta)
    # n**-(2i+1)/2 * int s**i Y ds == n**-1/2 * int (s/n)**i Y ds
    return (powers.T @ (w * y)) / math.sqrt(horizon)


def _solve_scaled(y: np.ndarray, delta: float, p: int):
    p = check_degree(p)
    gram = scaled_gram(p, y.size)
    cond = float(np.linalg.cond(gram))
    if cond > CONDITION_LIMIT:
        raise IllConditionedError(f"scaled normal equations have condition number {cond:.3g}")
    rhs = _scaled_moments(y, delta, p)
    scaled = linalg.cho_solve(linalg.cho_factor(gram), rhs)
    horizon = (y.size - 1) * delta
    exponents = np.arange(p + 1) + 0.5
    theta = scaled * np.power(horizon, -exponents)
    moments = rhs * np.power(horizon, exponents)
    return theta, moments, cond


def lse_trend(path: SamplePath, p: int, channel: str = "Y") -> np.ndarray:
    """Least-squares polynomial trend of degree ``p`` over the whole path."""
    theta, _, _ = _solve_scaled(path[channel], path.delta, p)
    return theta


def _residual_tau(y: np.ndarray, fitted: np.ndarray, delta: float, slope: float = 0.0) -> float:
    # Equals [sum_i th_i int s^i dY - int Y dY] / [int Y^2 ds - th' G th] exactly
    # when G th = moments, without the cancellation in the denominator.
    # ``slope * int resid ds`` is the trend-derivative term of the likelihood
    # equation; it vanishes whenever the fit contains a free intercept.
    resid = y - fitted
    w = trapezoid_weights(y.size, delta)
    numerator = slope * float(np.dot(w, resid)) - float(np.dot(resid[:-1], np.diff(y)))
    denominator = float(np.dot(w, resid**2))
    scale = float(np.dot(w, y**2))
    if not denominator > DEGENERACY_RTOL**2 * scale:
        raise DegenerateDenominatorError(
            f"tau denominator {denominator:.3g} is degenerate relative to int Y^2 = {scale:.3g}")
    return numerator / denominator


def estimate_tau(path: SamplePath, theta_tilde, p: int, channel: str = "Y") -> float:
    """Mean-reversion estimate given the trend estimate ``theta_tilde`` of degree ``p``.

    Raises :class:`DegenerateDenominatorError` when the denominator
    ``int Y^2 ds - theta' G theta`` is not positive.
    """
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    if theta_tilde.size != check_degree(p) + 1:
        raise ValueError("theta_tilde must have p + 1 entries")
    y = path[channel]
    return _residual_tau(y, eval_trend(theta_tilde, path.times), path.delta)


def _collect(theta, moments, cond, horizon, tau_fn) -> EstimationResult:
    flags = []
    try:
        tau = tau_fn()
    except DegenerateDenominatorError:
        tau = float("nan")
        flags.append("degenerate_denominator")
    else:
        if tau <= 0:
            flags.append("tau_nonpositive")
    return EstimationResult(np.asarray(theta, dtype=float), tau, horizon,
                            np.asarray(moments, dtype=float), cond, tuple(flags))


def estimate(path: SamplePath, p: int, channel: str = "Y") -> EstimationResult:
    """Trend and tau estimates for the polynomial-trend model."""
    y = path[channel]
    theta, moments, cond = _solve_scaled(y, path.delta, p)
    return _collect(theta, moments, cond, path.horizon,
                    lambda: estimate_tau(path, theta, p, channel))


def hh_breve_theta(zeta: SamplePath, channel: str = "zeta") -> float:
    """Slope of the least-squares line through the origin, ``~ (3/n^3) int s zeta ds``."""
    z = zeta[channel]
    t = zeta.times
    w = trapezoid_weights(z.size, zeta.delta)
    return float(np.dot(w, t * z) / np.dot(w, t * t))


def hh_breve_tau(zeta: SamplePath, theta_breve: float, channel: str = "zeta",
                 drift_term: bool = True) -> float:
    """Tau estimate in the neuron submodel (trend ``theta * t``, no intercept).

    Maximises the log-likelihood in tau with the slope held at ``theta_breve``:
    ``[theta int r ds - int r dzeta] / int r^2 ds`` with ``r = zeta - theta s``.
    Without an intercept ``int r ds`` does not vanish, and dropping it
    (``drift_term=False``) leaves an error term of variance ``theta**2 / c``
    in ``sqrt(n) (tau_breve - tau)``.
    """
    slope = theta_breve if drift_term else 0.0
    return _residual_tau(zeta[channel], theta_breve * zeta.times, zeta.delta, slope)


def estimate_hh(zeta: SamplePath, channel: str = "zeta", drift_term: bool = True) -> EstimationResult:
    """``(theta, tau)`` estimates from the reconstructed accumulated input."""
    theta = hh_breve_theta(zeta, channel)
    moment = riemann_moment(zeta, 1, channel)
    return _collect([theta], [moment], 1.0, zeta.horizon,
                    lambda: hh_breve_tau(zeta, theta, channel, drift_term))
