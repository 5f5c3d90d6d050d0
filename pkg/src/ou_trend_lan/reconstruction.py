"""Recover hidden gating variables and the accumulated input from a voltage path."""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .hodgkin_huxley import HHParams, HHState, _gating_kernel, ionic_current
from .model_core import SamplePath


def reconstruct_gating(V: SamplePath, j0) -> SamplePath:
    """Integrate ``dj = a_j(V)(1 - j) - b_j(V) j`` along the observed ``V``.

    Uses the exponential step of the simulator, which is the closed-form
    solution for ``V`` frozen over each grid cell. Returns channels ``n, m, h``.
    """
    n0, m0, h0 = (float(v) for v in j0)
    if not all(0.0 < j < 1.0 for j in (n0, m0, h0)):
        raise ValueError(f"initial gating values must lie in (0, 1), got {j0}")
    n, m, h = _gating_kernel(np.ascontiguousarray(V["V"]), n0, m0, h0, float(V.delta))
    return SamplePath(V.delta, {"n": n, "m": m, "h": h})


def reconstruct_input(V: SamplePath, init: HHState, params: HHParams) -> SamplePath:
    """Accumulated input ``zeta = Y_0 + (V - V_0) + int_0^t F ds`` (channel ``zeta``).

    The current integral uses the trapezoid rule on the reconstructed gating.
    """
    if not init.is_interior():
        raise ValueError(f"initial state must lie in the interior of the state space: {init}")
    v = V["V"]
    gating = reconstruct_gating(V, init.gating())
    state = SimpleNamespace(V=v, n=gating["n"], m=gating["m"], h=gating["h"])
    current = ionic_current(state, params)
    zeta = init.Y + (v - v[0]) + cumulative_trapezoid(current, dx=V.delta, initial=0.0)
    return SamplePath(V.delta, {"zeta": zeta})
