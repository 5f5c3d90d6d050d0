"""Stochastic Hodgkin-Huxley neuron driven by OU-perturbed accumulated input.

Voltage is in the shifted convention (rest near 0 mV), time in ms. The
input ``Y_t = theta * t + X_t`` replaces the constant ``a dt`` drive of the
deterministic model, so ``dV = dY - F(V, n, m, h) dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model_core import SamplePath
from .ou_sim import RngSpec, _ou_values, brownian_increments

MAX_DELTA = 0.05

_TAYLOR_CUTOFF = 1e-4


@numba.njit(cache=True, nogil=True)
def _x_over_expm1(x):
    if abs(x) < _TAYLOR_CUTOFF:
        x2 = x * x
        return 1.0 - 0.5 * x + x2 / 12.0 - x2 * x2 / 720.0
    return x / math.expm1(x)


@numba.njit(cache=True, nogil=True)
def _rates(v):
    a_n = 0.1 * _x_over_expm1((10.0 - v) / 10.0)
    b_n = 0.125 * math.exp(-v / 80.0)
    a_m = _x_over_expm1((25.0 - v) / 10.0)
    b_m = 4.0 * math.exp(-v / 18.0)
    a_h = 0.07 * math.exp(-v / 20.0)
    b_h = 1.0 / (math.exp((30.0 - v) / 10.0) + 1.0)
    return a_n, b_n, a_m, b_m, a_h, b_h


@numba.njit(cache=True, nogil=True)
def _rush_larsen(j, a, b, delta):
    total = a + b
    j_inf = a / total
    return j_inf + (j - j_inf) * math.exp(-total * delta)


@numba.njit(cache=True, nogil=True)
def _conductance_terms(n, m, h, g, e):
    """``F(V) = total * V - driving`` for fixed gating values."""
    k = g[1] * n**4
    na = g[0] * m**3 * h
    return k + na + g[2], k * e[1] + na * e[0] + g[2] * e[2]


@numba.njit(cache=True, nogil=True)
def _current(v, n, m, h, g, e):
    return (g[1] * n**4 * (v - e[1])
            + g[0] * m**3 * h * (v - e[0])
            + g[2] * (v - e[2]))


@numba.njit(cache=True, nogil=True)
def _gating_step(v_mid, n, m, h, delta):
    a_n, b_n, a_m, b_m, a_h, b_h = _rates(v_mid)
    return (_rush_larsen(n, a_n, b_n, delta),
            _rush_larsen(m, a_m, b_m, delta),
            _rush_larsen(h, a_h, b_h, delta))


_MAX_SWEEPS = 50


@numba.njit(cache=True, nogil=True)
def _hh_kernel(v0, n0, m0, h0, y, delta, g, e):
    size = y.size
    v = np.empty(size)
    n = np.empty(size)
    m = np.empty(size)
    h = np.empty(size)
    v[0], n[0], m[0], h[0] = v0, n0, m0, h0
    half = 0.5 * delta
    for k in range(size - 1):
        base = v[k] + (y[k + 1] - y[k]) - half * _current(v[k], n[k], m[k], h[k], g, e)
        v_next = v[k]
        # Fixed point: the gating rates at the step midpoint depend on V_{k+1};
        # for given gating the trapezoid step is linear in V_{k+1}.
        for _ in range(_MAX_SWEEPS):
            nn, mm, hh = _gating_step(0.5 * (v[k] + v_next), n[k], m[k], h[k], delta)
            total, driving = _conductance_terms(nn, mm, hh, g, e)
            update = (base + half * driving) / (1.0 + half * total)
            converged = abs(update - v_next) <= 1e-14 * (1.0 + abs(update))
            v_next = update
            if converged:
                break
        v[k + 1] = v_next
        # Recompute from the accepted V so reconstruction can replay it exactly.
        n[k + 1], m[k + 1], h[k + 1] = _gating_step(0.5 * (v[k] + v_next), n[k], m[k], h[k], delta)
    return v, n, m, h


@numba.njit(cache=True, nogil=True)
def _gating_kernel(v, n0, m0, h0, delta):
    size = v.size
    n = np.empty(size)
    m = np.empty(size)
    h = np.empty(size)
    n[0], m[0], h[0] = n0, m0, h0
    for k in range(size - 1):
        n[k + 1], m[k + 1], h[k + 1] = _gating_step(0.5 * (v[k] + v[k + 1]), n[k], m[k], h[k], delta)
    return n, m, h


@dataclass(frozen=True)
class HHParams:
    """Input parameters ``(theta, tau, c)`` and membrane constants.

    Defaults are the classical squid-axon values (mS/cm^2, mV). ``c = 0`` gives
    the deterministic system with constant input ``a = theta``; zero
    conductances are allowed for diagnostics.
    """

    theta: float
    tau: float = 1.0
    c: float = 1.0
    g_na: float = 120.0
    g_k: float = 36.0
    g_l: float = 0.3
    e_na: float = 120.0
    e_k: float = -12.0
    e_l: float = 10.6

    def __post_init__(self):
        if not self.theta > 0 or not self.tau > 0:
            raise ValueError("theta and tau must be strictly positive")
        if not self.c >= 0:
            raise ValueError("c must be nonnegative")
        if min(self.g_na, self.g_k, self.g_l) < 0:
            raise ValueError("conductances must be nonnegative")
        values = (self.theta, self.tau, self.c, self.g_na, self.g_k, self.g_l,
                  self.e_na, self.e_k, self.e_l)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("HH parameters must be finite")

    @property
    def conductances(self) -> np.ndarray:
        return np.array([self.g_na, self.g_k, self.g_l])

    @property
    def reversals(self) -> np.ndarray:
        return np.array([self.e_na, self.e_k, self.e_l])


@dataclass(frozen=True)
class HHState:
    V: float
    n: float
    m: float
    h: float
    Y: float = 0.0

    def is_interior(self) -> bool:
        return (all(0.0 < j < 1.0 for j in (self.n, self.m, self.h))
                and math.isfinite(self.V) and math.isfinite(self.Y))

    def gating(self) -> tuple[float, float, float]:
        return self.n, self.m, self.h


def rate_functions(V):
    """Opening/closing rates ``(a_n, b_n, a_m, b_m, a_h, b_h)`` at potential ``V``.

    Accepts scalars or arrays. The removable singularities of ``a_n`` (V=10)
    and ``a_m`` (V=25) go through a stable ``x / (exp(x) - 1)`` kernel.
    """
    if np.ndim(V) == 0:
        return _rates(float(V))
    v = np.asarray(V, dtype=float)
    out = np.empty((6,) + v.shape)
    flat = out.reshape(6, -1)
    for i, vi in enumerate(v.ravel()):
        flat[:, i] = _rates(vi)
    return tuple(out)


def steady_gating(V: float) -> tuple[float, float, float]:
    """Fixed points ``j_inf = a_j / (a_j + b_j)`` for ``j = n, m, h``."""
    a_n, b_n, a_m, b_m, a_h, b_h = _rates(float(V))
    return a_n / (a_n + b_n), a_m / (a_m + b_m), a_h / (a_h + b_h)


def resting_state(V: float = 0.0, Y: float = 0.0) -> HHState:
    n, m, h = steady_gating(V)
    return HHState(V, n, m, h, Y)


def ionic_current(state, params: HHParams):
    """``F = g_K n^4 (V - E_K) + g_Na m^3 h (V - E_Na) + g_L (V - E_L)``.

    ``state`` is an :class:`HHState` or any object with array-valued
    ``V, n, m, h`` attributes.
    """
    v, n, m, h = state.V, state.n, state.m, state.h
    return (params.g_k * np.power(n, 4) * (np.subtract(v, params.e_k))
            + params.g_na * np.power(m, 3) * h * (np.subtract(v, params.e_na))
            + params.g_l * (np.subtract(v, params.e_l)))


def _check_setup(init: HHState, delta: float) -> None:
    if not init.is_interior():
        raise ValueError(f"initial state must lie in the interior of the state space: {init}")
    if not 0 < delta <= MAX_DELTA:
        raise ValueError(f"delta must lie in (0, {MAX_DELTA}] ms, got {delta}")


def drive_hh(params: HHParams, init: HHState, y: np.ndarray, delta: float):
    """Integrate the membrane equations for a given input path ``y`` on the grid.

    Gating variables take an exponential (Rush-Larsen) step, exact for frozen
    voltage and ``[0, 1]``-preserving, with rates evaluated at the step
    midpoint ``(V_k + V_{k+1}) / 2``. ``V`` takes the implicit trapezoid step
    ``V_{k+1} = V_k + dY_k - delta (F_k + F_{k+1}) / 2``, which is linear in
    ``V_{k+1}`` once the gating is fixed; the coupled system is solved by
    fixed-point sweeps. Trapezoid reconstruction of the input inverts this step
    exactly. Returns arrays ``(V, n, m, h)``.
    """
    _check_setup(init, delta)
    y = np.ascontiguousarray(y, dtype=float)
    v, n, m, h = _hh_kernel(float(init.V), float(init.n), float(init.m), float(init.h),
                            y, float(delta), params.conductances, params.reversals)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("membrane potential diverged")
    for name, j in (("n", n), ("m", m), ("h", h)):
        if j.min() < 0.0 or j.max() > 1.0:
            raise AssertionError(f"gating variable {name} left [0, 1]")
    return v, n, m, h


def simulate_hh(params: HHParams, init: HHState, horizon: float, delta: float,
                rng: RngSpec) -> SamplePath:
    """Simulate ``(V, n, m, h, Y)`` and return channels ``V, n, m, h, Y, X, dW``.

    ``Y = theta t + X`` with ``X`` the exact OU path started at ``init.Y``;
    ``dW`` is omitted when ``c = 0``.
    """
    _check_setup(init, delta)
    x = _ou_values(params.tau, params.c, init.Y, horizon, delta, rng)
    t = np.arange(x.size) * delta
    y = params.theta * t + x
    v, n, m, h = drive_hh(params, init, y, delta)
    channels = {"V": v, "n": n, "m": m, "h": h, "Y": y, "X": x}
    if params.c > 0:
        channels["dW"] = brownian_increments(x, params.tau, params.c, delta)
    return SamplePath(delta, channels)


def count_spikes(v: np.ndarray, threshold: float = 50.0) -> int:
    """Number of upward crossings of ``threshold``."""
    above = np.asarray(v) >= threshold
    return int(np.count_nonzero(~above[:-1] & above[1:]))
