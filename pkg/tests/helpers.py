"""Shared oracles for the test suite."""
import numpy as np

from ou_trend_lan.hodgkin_huxley import simulate_hh
from ou_trend_lan.model_core import SamplePath
from ou_trend_lan.reconstruction import reconstruct_input


def observation_refinement_errors(params, init, horizon, fine_delta, strides, rng):
    """``sup |zeta - Y|`` when a finely simulated ``V`` is observed every ``stride`` steps.

    The fine simulation stands in for the continuous-time path, so the error
    is the reconstruction's quadrature error on each observation grid.
    """
    fine = simulate_hh(params, init, horizon, fine_delta, rng)
    out = []
    for stride in strides:
        v = fine["V"][::stride]
        y = fine["Y"][::stride]
        zeta = reconstruct_input(SamplePath(fine_delta * stride, {"V": v}), init, params)["zeta"]
        out.append(float(np.max(np.abs(zeta - y))))
    return out
