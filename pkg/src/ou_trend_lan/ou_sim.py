"""Exact simulation of the OU noise and of the observed trend-plus-noise process."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model_core import ModelParams, SamplePath, eval_trend


@dataclass(frozen=True)
class RngSpec:
    """Reproducible random stream keyed by ``(master_seed, stream_index)``.

    Streams use the counter-based Philox generator seeded through a
    ``SeedSequence``; distinct stream indices give independent substreams.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            value = getattr(self, name)
            if int(value) != value or not 0 <= value < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([int(self.master_seed), int(self.stream_index)])
        return np.random.Generator(np.random.Philox(seq))


def grid_size(horizon: float, delta: float) -> int:
    """Number of steps ``N`` with ``N * delta == horizon`` (up to rounding)."""
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be finite and positive, got {delta!r}")
    if not (math.isfinite(horizon) and horizon >= delta):
        raise ValueError(f"horizon must be finite and >= delta, got {horizon!r}")
    steps = int(round(horizon / delta))
    if abs(steps * delta - horizon) > 1e-9 * horizon:
        raise ValueError(f"horizon {horizon} is not a multiple of delta {delta}")
    return steps


@numba.njit(cache=True, nogil=True)
def _linear_recursion(x0, a, s, xi):
    out = np.empty(xi.size + 1)
    out[0] = x0
    for k in range(xi.size):
        out[k + 1] = a * out[k] + s * xi[k]
    return out


def ou_transition(tau: float, c: float, delta: float) -> tuple[float, float]:
    """Exact one-step coefficients: ``X' = a X + s xi`` with ``xi ~ N(0, 1)``."""
    a = math.exp(-tau * delta)
    s = math.sqrt(c * -math.expm1(-2.0 * tau * delta) / (2.0 * tau))
    return a, s


def _ou_values(tau, c, x0, horizon, delta, rng: RngSpec) -> np.ndarray:
    if not (math.isfinite(tau) and tau > 0):
        raise ValueError(f"tau must be finite and positive, got {tau!r}")
    if not (math.isfinite(c) and c >= 0):
        raise ValueError(f"c must be finite and nonnegative, got {c!r}")
    steps = grid_size(horizon, delta)
    xi = rng.generator().standard_normal(steps)
    a, s = ou_transition(tau, c, delta)
    return _linear_recursion(float(x0), a, s, xi)


def brownian_increments(x: np.ndarray, tau: float, c: float, delta: float) -> np.ndarray:
    """Brownian increments implied by an OU path, ``dW[0] = 0``.

    ``sqrt(c) dW_k = X_k - X_{k-1} + tau X_{k-1} delta``: the Euler residual of
    the exact path, so Ito sums against ``dW`` and against ``dX`` agree exactly.
    """
    dw = np.zeros_like(x)
    dw[1:] = (np.diff(x) + tau * x[:-1] * delta) / math.sqrt(c)
    return dw


def simulate_ou(tau: float, c: float, x0: float, horizon: float, delta: float,
                rng: RngSpec) -> SamplePath:
    """OU path on ``[0, horizon]`` from the exact Gaussian transition (channel ``X``)."""
    return SamplePath(delta, {"X": _ou_values(tau, c, x0, horizon, delta, rng)})


def simulate_observation(params: ModelParams, horizon: float, delta: float,
                         rng: RngSpec) -> SamplePath:
    """Observed path ``Y = R + X`` with channels ``Y``, ``X`` and, if ``c > 0``, ``dW``."""
    x = _ou_values(params.tau, params.c, params.x0, horizon, delta, rng)
    t = np.arange(x.size) * delta
    channels = {"Y": eval_trend(params.trend, t) + x, "X": x}
    if params.c > 0:
        channels["dW"] = brownian_increments(x, params.tau, params.c, delta)
    return SamplePath(delta, channels)
