"""Replication harness and functional probes for the OU limit laws.

Replication ``r`` always draws from ``RngSpec(master_seed, r)`` and results are
aggregated in replication order, so summaries do not depend on the number of
worker threads.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .estimators import estimate, estimate_hh, trapezoid_weights
from .hodgkin_huxley import HHParams, HHState, resting_state, simulate_hh
from .model_core import ModelParams, check_degree, limit_info_matrix, local_scale
from .ou_sim import RngSpec, _ou_values, simulate_ou, simulate_observation
from .reconstruction import reconstruct_input

log = logging.getLogger(__name__)

MODELS = ("ou-trend", "hh")
FAILURE_FRACTION = 0.05


class StudyFailedError(RuntimeError):
    """More than 5% of the replications produced no usable estimate."""

    def __init__(self, summary: "MCSummary"):
        super().__init__(f"{summary.failure_count} of {summary.replications} replications failed")
        self.summary = summary


@dataclass(frozen=True)
class StudyConfig:
    """Monte Carlo study settings.

    ``theta`` holds the trend coefficients for ``ou-trend`` and the single input
    drift for ``hh`` (the submodel with the intercept fixed at zero).
    """

    model: str = "ou-trend"
    theta: tuple[float, ...] = (0.0, 1.0)
    tau: float = 1.0
    c: float = 1.0
    x0: float = 0.0
    n: float = 2000.0
    delta: float = 0.01
    replications: int = 500
    master_seed: int = 20240917
    rel_tol: float = 0.2
    hh_init: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if self.hh_init is not None:
            object.__setattr__(self, "hh_init", tuple(float(v) for v in self.hh_init))
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.replications < 2:
            raise ValueError("a study needs at least two replications")
        if self.model == "hh" and len(self.theta) != 1:
            raise ValueError("the hh submodel takes a single theta")
        if self.model == "ou-trend":
            check_degree(len(self.theta) - 1)
        if not (self.tau > 0 and self.c >= 0 and self.n > 0 and self.delta > 0 and self.rel_tol > 0):
            raise ValueError("tau, n, delta and rel_tol must be positive and c nonnegative")

    @property
    def p(self) -> int:
        return len(self.theta) - 1

    def params(self) -> ModelParams:
        return ModelParams.from_vector(self.theta + (self.tau,), self.c, self.x0)

    def hh_params(self) -> HHParams:
        return HHParams(theta=self.theta[0], tau=self.tau, c=self.c)

    def initial_state(self) -> HHState:
        if self.hh_init is None:
            return resting_state(Y=self.x0)
        return HHState(*self.hh_init)

    def true_vector(self) -> np.ndarray:
        return np.array(self.theta + (self.tau,))

    def rates(self) -> np.ndarray:
        """Multipliers that turn estimation errors into rescaled errors."""
        if self.model == "hh":
            return np.array([self.n**1.5, self.n**0.5])
        return 1.0 / local_scale(self.p, self.n)

    def labels(self) -> list[str]:
        if self.model == "hh":
            return ["theta", "tau"]
        return [f"theta{j}" for j in range(self.p + 1)] + ["tau"]

    def target_cov(self) -> np.ndarray:
        """Covariance of the limit law of the rescaled errors."""
        if self.model == "hh":
            return np.diag([3.0 * self.c / self.tau**2, 2.0 * self.tau])
        if self.c == 0:
            out = np.zeros((self.p + 2, self.p + 2))
            out[-1, -1] = 2.0 * self.tau
            return out
        return np.linalg.inv(limit_info_matrix(self.p, 1.0, self.tau, self.c))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MCSummary:
    config: StudyConfig
    replications: int
    horizon: float
    labels: list[str]
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    target_cov: np.ndarray
    deviation: np.ndarray
    failure_count: int
    errors: np.ndarray = field(repr=False)

    @property
    def within_tolerance(self) -> np.ndarray:
        return self.deviation <= self.config.rel_tol

    @property
    def passed(self) -> bool:
        return bool(np.all(self.within_tolerance)) and not self.too_many_failures

    @property
    def too_many_failures(self) -> bool:
        return self.failure_count > FAILURE_FRACTION * self.replications

    def to_dict(self) -> dict:
        return {
            "replications": self.replications,
            "horizon": self.horizon,
            "labels": list(self.labels),
            "empirical_mean": self.empirical_mean.tolist(),
            "empirical_cov": self.empirical_cov.tolist(),
            "target_cov": self.target_cov.tolist(),
            "deviation": self.deviation.tolist(),
            "within_tolerance": self.within_tolerance.tolist(),
            "rel_tol": self.config.rel_tol,
            "failure_count": self.failure_count,
            "passed": self.passed,
        }


def deviation_matrix(empirical: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Entrywise ``|emp - target|`` relative to ``|target|``.

    Entries whose target is zero are measured against ``sqrt(target_ii target_jj)``,
    the scale a covariance entry can take.
    """
    diag = np.sqrt(np.abs(np.diag(target)))
    scale = np.where(target != 0, np.abs(target), np.outer(diag, diag))
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.abs(empirical - target) / scale
    return np.where(scale > 0, dev, np.abs(empirical - target))


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("OTL_WORKERS", "1"))
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def map_replications(fn: Callable[[int], object], count: int, workers: int | None = None) -> list:
    """``[fn(0), ..., fn(count - 1)]`` computed on a thread pool, in index order."""
    workers = resolve_workers(workers)
    if workers == 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def _ou_replication(config: StudyConfig, r: int) -> np.ndarray:
    path = simulate_observation(config.params(), config.n, config.delta,
                                RngSpec(config.master_seed, r))
    return estimate(path, config.p).as_vector()


def _hh_replication(config: StudyConfig, r: int) -> np.ndarray:
    params = config.hh_params()
    init = config.initial_state()
    path = simulate_hh(params, init, config.n, config.delta, RngSpec(config.master_seed, r))
    zeta = reconstruct_input(path.select("V"), init, params)
    return estimate_hh(zeta).as_vector()


def run_study(config: StudyConfig, workers: int | None = None, strict: bool = True) -> MCSummary:
    """Simulate, estimate and summarise the rescaled estimation errors.

    Replications whose tau denominator is degenerate count as failures and are
    left out of the moments. With ``strict``, more than 5% failures raises
    :class:`StudyFailedError` (the summary rides on the exception).
    """
    one = _hh_replication if config.model == "hh" else _ou_replication
    estimates = np.array(map_replications(lambda r: one(config, r), config.replications, workers))
    errors = (estimates - config.true_vector()) * config.rates()
    good = np.all(np.isfinite(errors), axis=1)
    failures = int(np.count_nonzero(~good))
    kept = errors[good]
    if kept.shape[0] >= 2:
        mean = kept.mean(axis=0)
        cov = np.cov(kept, rowvar=False)
    else:
        mean = np.full(errors.shape[1], np.nan)
        cov = np.full((errors.shape[1],) * 2, np.nan)
    target = config.target_cov()
    summary = MCSummary(config, config.replications, config.n, config.labels(), mean, cov,
                        target, deviation_matrix(cov, target), failures, errors)
    log.info("study %s: M=%d n=%g failures=%d", config.model, config.replications, config.n, failures)
    if strict and summary.too_many_failures:
        raise StudyFailedError(summary)
    return summary


def standardized_moments(errors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate skewness and excess kurtosis of the rescaled errors."""
    errors = np.asarray(errors)
    errors = errors[np.all(np.isfinite(errors), axis=1)]
    return stats.skew(errors, axis=0), stats.kurtosis(errors, axis=0)


def functional(name) -> Callable[[np.ndarray], np.ndarray]:
    """Named test function: ``identity``, ``square``, ``abs`` or ``indicator(a,b)``.

    The indicator may also be given as a tuple ``("indicator", a, b)``.
    """
    if isinstance(name, tuple) and name[0] == "indicator":
        lo, hi = float(name[1]), float(name[2])
        return lambda x: ((x >= lo) & (x <= hi)).astype(float)
    if callable(name):
        return name
    name = str(name).replace(" ", "")
    if name == "identity":
        return lambda x: x
    if name == "square":
        return np.square
    if name == "abs":
        return np.abs
    if name.startswith("indicator(") and name.endswith(")"):
        lo, hi = (float(v) for v in name[len("indicator("):-1].split(","))
        return functional(("indicator", lo, hi))
    raise ValueError(f"unknown functional {name!r}")


def weighted_average_probe(tau: float, c: float, x0: float, f, ell: int,
                            horizons: Sequence[float], delta: float = 0.01,
                            rng: RngSpec = RngSpec(0)) -> list[tuple[float, float]]:
    """Time-weighted averages ``(ell / r**ell) int_0^r s**(ell-1) f(X_s) ds`` along one path.

    These converge to the stationary mean of ``f`` under ``N(0, c / (2 tau))``.
    """
    if ell < 1:
        raise ValueError("ell must be at least 1")
    fn = functional(f)
    x = simulate_ou(tau, c, x0, max(horizons), delta, rng)["X"]
    fx = fn(x)
    s = np.arange(x.size) * delta
    rows = []
    for r in horizons:
        k = int(round(r / delta))
        w = trapezoid_weights(k + 1, delta)
        integral = np.dot(w, s[: k + 1] ** (ell - 1) * fx[: k + 1])
        rows.append((float(r), float(ell * integral / r**ell)))
    return rows


def scaled_moment_probe(tau: float, c: float, x0: float, ell: int, n: float, M: int,
                            master_seed: int = 0, delta: float = 0.01,
                            workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Empirical covariance of ``(n**-(2i+1)/2 int_0^n s**i X_s ds)_{i=0..ell}``.

    Returns ``(empirical, target)`` with target ``(c / tau**2) / (i + j + 1)``.
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    if M < 2:
        raise ValueError("M must be at least 2")

    def one(r: int) -> np.ndarray:
        x = _ou_values(tau, c, x0, n, delta, RngSpec(master_seed, r))
        u = np.linspace(0.0, 1.0, x.size)
        w = trapezoid_weights(x.size, delta)
        powers = np.vander(u, ell + 1, increasing=True)
        return (powers.T @ (w * x)) / math.sqrt(n)

    samples = np.array(map_replications(one, M, workers))
    k = np.add.outer(np.arange(ell + 1), np.arange(ell + 1)) + 1
    return np.atleast_2d(np.cov(samples, rowvar=False)), (c / tau**2) / k


def with_overrides(config: StudyConfig, **changes) -> StudyConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})


def uniform_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """One draw from the uniform law on the closed ball of ``radius`` in ``R**dim``."""
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return radius * rng.random() ** (1.0 / dim) * direction


def lan_remainder_study(params: ModelParams, horizons: Sequence[float], replications: int,
                        radius: float = 2.0, delta: float = 0.01, master_seed: int = 0,
                        directions: np.ndarray | None = None,
                        workers: int | None = None) -> dict[float, np.ndarray]:
    """``|rho_{n,theta,h}(1)|`` per replication for every horizon ``n``.

    Replication ``r`` simulates from ``RngSpec(master_seed, r)``. Without
    ``directions`` each replication draws its own ``h`` uniformly from the ball
    of ``radius``; otherwise row ``r`` of ``directions`` is used as ``h``.
    """
    from .likelihood import lan_remainder

    if params.c <= 0:
        raise ValueError("the LAN expansion needs c > 0")
    dim = params.p + 2
    if directions is not None:
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        if directions.shape != (replications, dim):
            raise ValueError(f"directions must have shape ({replications}, {dim})")
    out = {}
    for n in horizons:
        def one(r: int, n=n) -> float:
            path = simulate_observation(params, n, delta, RngSpec(master_seed, r))
            if directions is None:
                seq = np.random.SeedSequence([master_seed, r, 1])
                h = uniform_ball(np.random.Generator(np.random.Philox(seq)), dim, radius)
            else:
                h = directions[r]
            return abs(lan_remainder(path, params, h, n))

        out[float(n)] = np.array(map_replications(one, replications, workers))
    return out
