"""Parameter and path types, local scale, limit information matrices.

The observed process is ``Y_t = R(t) + X_t`` where ``R`` is a polynomial
trend and ``X`` an Ornstein-Uhlenbeck process ``dX = -tau X dt + sqrt(c) dW``.
The full parameter is ``(theta_0, ..., theta_p, tau)``; ``c`` is known.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

MAX_DEGREE = 8


class DegreeError(ValueError):
    """Polynomial degree outside the supported range ``0..MAX_DEGREE``."""


def check_degree(p: int) -> int:
    if int(p) != p or p < 0:
        raise DegreeError(f"degree must be a nonnegative integer, got {p!r}")
    if p > MAX_DEGREE:
        # Hilbert-type normal equations lose all precision beyond this.
        raise DegreeError(f"degree {p} exceeds the supported maximum {MAX_DEGREE}")
    return int(p)


@dataclass(frozen=True)
class PolynomialTrend:
    """Trend ``R(t) = sum_j coeffs[j] * t**j`` with positive leading coefficient."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(v) for v in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if not coeffs:
            raise ValueError("trend needs at least one coefficient")
        if not all(np.isfinite(coeffs)):
            raise ValueError("trend coefficients must be finite")
        if coeffs[-1] <= 0:
            raise ValueError("leading trend coefficient must be strictly positive")
        check_degree(len(coeffs) - 1)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs)


@dataclass(frozen=True)
class ModelParams:
    """Full model parameter plus the known diffusion constant and start point.

    ``c = 0`` is accepted as the noise-free limit; likelihood computations
    require ``c > 0``.
    """

    trend: PolynomialTrend
    tau: float
    c: float
    x0: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be finite and positive, got {self.tau!r}")
        if not (np.isfinite(self.c) and self.c >= 0):
            raise ValueError(f"c must be finite and nonnegative, got {self.c!r}")
        if not np.isfinite(self.x0):
            raise ValueError("x0 must be finite")

    @property
    def p(self) -> int:
        return self.trend.degree

    @property
    def theta(self) -> np.ndarray:
        """Parameter vector ``(theta_0, ..., theta_p, tau)``."""
        return np.append(self.trend.as_array(), self.tau)

    @classmethod
    def from_vector(cls, theta, c: float, x0: float = 0.0) -> "ModelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(PolynomialTrend(tuple(theta[:-1])), float(theta[-1]), c, x0)


@dataclass(frozen=True)
class SamplePath:
    """Uniform-grid time series, ``t_k = k * delta`` for ``k = 0..N``.

    Channels are stored as read-only float arrays of equal length ``N + 1``.
    Increment channels (``dW``) follow the convention ``dW[0] = 0`` and
    ``dW[k] = W(t_k) - W(t_{k-1})``, so ``np.cumsum(dW)`` is the path itself.
    """

    delta: float
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be finite and positive, got {self.delta!r}")
        if not self.channels:
            raise ValueError("a sample path needs at least one channel")
        frozen = {}
        length = None
        for name, values in self.channels.items():
            arr = np.array(values, dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"channel {name!r} must be one-dimensional")
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise ValueError("all channels must share the same length")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"channel {name!r} contains non-finite values")
            arr.flags.writeable = False
            frozen[name] = arr
        if length < 2:
            raise ValueError("a sample path needs at least two grid points")
        object.__setattr__(self, "channels", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        return name in self.channels

    @property
    def n_steps(self) -> int:
        return len(next(iter(self.channels.values()))) - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.delta

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.delta

    def select(self, *names: str) -> "SamplePath":
        return SamplePath(self.delta, {k: self.channels[k] for k in names})


def eval_trend(trend: PolynomialTrend | np.ndarray, t):
    """Evaluate the trend polynomial at ``t`` (scalar or array) by Horner's scheme."""
    coeffs = trend.coeffs if isinstance(trend, PolynomialTrend) else trend
    t = np.asarray(t, dtype=float)
    acc = np.zeros_like(t)
    for a in reversed(coeffs):
        acc = acc * t + a
    return acc if acc.ndim else float(acc)


def eval_trend_derivative(trend: PolynomialTrend | np.ndarray, t):
    coeffs = trend.coeffs if isinstance(trend, PolynomialTrend) else trend
    deriv = [j * a for j, a in enumerate(coeffs)][1:]
    if not deriv:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        return out if out.ndim else 0.0
    return eval_trend(np.array(deriv), t)


def eval_drift_signal(params: ModelParams, t):
    """Time-dependent drift ``R'(t) + tau * R(t)`` of the observed process."""
    return eval_trend_derivative(params.trend, t) + params.tau * eval_trend(params.trend, t)


def hilbert_like_matrix(p: int, t: float) -> np.ndarray:
    """Matrix with entries ``t**(i+j+1) / (i+j+1)``, i.e. ``int_0^t s**(i+j) ds``."""
    p = check_degree(p)
    k = np.add.outer(np.arange(p + 1), np.arange(p + 1)) + 1
    return np.power(float(t), k) / k


def limit_info_matrix(p: int, t: float, tau: float, c: float) -> np.ndarray:
    """Deterministic limit of the information process at time ``t``.

    Trend block ``(tau**2 / c) * hilbert_like_matrix(p, t)``, last diagonal
    entry ``t / (2 tau)``, zeros elsewhere.
    """
    if t < 0 or tau <= 0 or c <= 0:
        raise ValueError("limit_info_matrix needs t >= 0, tau > 0, c > 0")
    p = check_degree(p)
    out = np.zeros((p + 2, p + 2))
    out[: p + 1, : p + 1] = (tau**2 / c) * hilbert_like_matrix(p, t)
    out[p + 1, p + 1] = t / (2.0 * tau)
    return out


def local_scale(p: int, n: float) -> np.ndarray:
    """Diagonal of the local scale: ``n**-(2j+1)/2`` for the trend, ``n**-1/2`` for tau."""
    if not n > 0:
        raise ValueError(f"n must be positive, got {n!r}")
    p = check_degree(p)
    exponents = np.append(np.arange(p + 1) + 0.5, 0.5)
    return np.power(float(n), -exponents)
