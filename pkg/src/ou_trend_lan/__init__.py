"""Polynomial trends observed through Ornstein-Uhlenbeck noise.

Simulation, explicit trend and mean-reversion estimators, local asymptotic
normality diagnostics, and input estimation for a stochastic Hodgkin-Huxley
neuron from its membrane potential.
"""
from .estimators import EstimationResult, estimate, estimate_hh, estimate_tau, lse_trend
from .hodgkin_huxley import HHParams, HHState, resting_state, simulate_hh
from .model_core import ModelParams, PolynomialTrend, SamplePath
from .montecarlo import MCSummary, StudyConfig, run_study
from .ou_sim import RngSpec, simulate_observation, simulate_ou
from .reconstruction import reconstruct_gating, reconstruct_input

__version__ = "0.1.0"

__all__ = [
    "EstimationResult", "HHParams", "HHState", "MCSummary", "ModelParams",
    "PolynomialTrend", "RngSpec", "SamplePath", "StudyConfig", "__version__",
    "estimate", "estimate_hh", "estimate_tau", "lse_trend", "reconstruct_gating",
    "reconstruct_input", "resting_state", "run_study", "simulate_hh",
    "simulate_observation", "simulate_ou",
]
