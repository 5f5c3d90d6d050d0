"""Command-line front end: ``otl simulate | estimate | reconstruct | mc-study | lan-check | probe``.

Paths go to CSV (17 significant digits, so a write/read round trip is exact),
summaries go to JSON with a provenance block. Exit codes: 0 ok, 2 bad config
or input, 3 simulation failure, 4 study failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import EstimatorError, estimate, estimate_hh
from .hodgkin_huxley import HHParams, HHState, resting_state, simulate_hh
from .model_core import ModelParams, SamplePath
from .montecarlo import (StudyConfig, StudyFailedError, weighted_average_probe,
                         scaled_moment_probe, lan_remainder_study, run_study)
from .ou_sim import RngSpec, simulate_observation
from .reconstruction import reconstruct_gating, reconstruct_input

log = logging.getLogger("otl")

EXIT_OK, EXIT_CONFIG, EXIT_SIMULATION, EXIT_STUDY = 0, 2, 3, 4
OU_COLUMNS = ("Y", "X", "dW")
HH_COLUMNS = ("V", "n", "m", "h", "Y", "X", "dW")


class ConfigError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


# ---------------------------------------------------------------- parsing helpers

def float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_init(text: str | None, y0: float = 0.0) -> HHState:
    """``rest``, ``rest:V`` or ``V,n,m,h[,Y]``."""
    if text is None or text == "rest":
        return resting_state(Y=y0)
    if text.startswith("rest:"):
        return resting_state(float(text[5:]), Y=y0)
    values = float_list(text)
    if len(values) not in (4, 5):
        raise ConfigError("--init takes 'rest', 'rest:V' or V,n,m,h[,Y]")
    state = HHState(*values)
    if not state.is_interior():
        raise ConfigError(f"initial state is not in the interior of the state space: {state}")
    return state


def read_study_config(path: str | Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_STUDY_TYPES = {f.name: f.type for f in dataclasses.fields(StudyConfig)}


def coerce_study_value(key: str, value):
    if key not in _STUDY_TYPES:
        raise ConfigError(f"unknown study setting {key!r}")
    if not isinstance(value, str):
        return value
    if key in ("theta", "hh_init"):
        return float_list(value)
    if key in ("replications", "master_seed"):
        return int(value)
    if key == "model":
        return value
    return float(value)


# ---------------------------------------------------------------- CSV and JSON

def write_path_csv(path: SamplePath, columns, out) -> None:
    columns = [c for c in columns if c in path]
    table = np.column_stack([path.times] + [path[c] for c in columns])
    buf = io.StringIO()
    np.savetxt(buf, table, fmt="%.17g", delimiter=",", header=",".join(["t"] + columns), comments="")
    _emit(buf.getvalue(), out)


def read_path_csv(source) -> SamplePath:
    """Read a ``t,...`` CSV on a uniform grid back into a sample path."""
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {source}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 3 or not rows[0] or rows[0][0].strip() != "t":
        raise ConfigError(f"{source}: expected a header starting with 't' and at least two rows")
    header = [h.strip() for h in rows[0]]
    try:
        table = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{source}: non-numeric entry ({exc})") from exc
    if table.ndim != 2 or table.shape[1] != len(header):
        raise ConfigError(f"{source}: rows do not match the header")
    t = table[:, 0]
    delta = t[1] - t[0]
    if not delta > 0 or not np.allclose(np.diff(t), delta, rtol=1e-9, atol=0):
        raise ConfigError(f"{source}: time column is not a uniform increasing grid")
    if t[0] != 0:
        raise ConfigError(f"{source}: time column must start at 0")
    return SamplePath(float(delta), {name: table[:, j] for j, name in enumerate(header) if j > 0})


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def with_provenance(payload: dict, config: dict, seed) -> dict:
    return {"provenance": {"version": __version__, "master_seed": seed,
                           "config_hash": config_hash(config), "config": config},
            **payload}


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def dump_json(payload: dict, out) -> None:
    _emit(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n", out)


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------- commands

def _ou_params(args) -> ModelParams:
    theta = args.theta or (0.0, 1.0)
    if args.p is not None and len(theta) != args.p + 1:
        raise ConfigError(f"--p {args.p} needs {args.p + 1} trend coefficients, got {len(theta)}")
    return ModelParams.from_vector(theta + (args.tau,), args.c, args.x0)


def _hh_params(args, theta=None) -> HHParams:
    theta = args.theta if theta is None else theta
    if theta is None or len(theta) != 1:
        raise ConfigError("the hh model takes a single --theta value")
    return HHParams(theta=theta[0], tau=args.tau, c=args.c)


def cmd_simulate(args) -> int:
    rng = RngSpec(args.seed, args.stream)
    n = args.n if args.n is not None else 100.0
    delta = args.delta if args.delta is not None else 0.01
    try:
        if args.model == "hh":
            params = _hh_params(args)
            init = parse_init(args.init, args.x0)
            path = simulate_hh(params, init, n, delta, rng)
            columns = HH_COLUMNS
        else:
            params = _ou_params(args)
            path = simulate_observation(params, n, delta, rng)
            columns = OU_COLUMNS
    except (FloatingPointError, AssertionError, OverflowError) as exc:
        raise SimulationError(str(exc)) from exc
    write_path_csv(path, columns, args.out)
    return EXIT_OK


def _estimation_payload(result, extra: dict) -> dict:
    return {"theta_hat": result.theta_hat, "tau_hat": result.tau_hat, "flags": list(result.flags),
            "condition_number": result.condition_number, "horizon": result.horizon, **extra}


def cmd_estimate(args) -> int:
    path = read_path_csv(args.input)
    config = {"command": "estimate", "model": args.model, "input": str(args.input)}
    if args.model == "hh":
        if "Y" in path and not args.reconstruct:
            zeta = path.select("Y")
            source = "Y"
        elif "V" in path:
            init = parse_init(args.init, args.x0)
            zeta = reconstruct_input(path.select("V"), init, HHParams(theta=1.0))
            source = "reconstructed"
            config["init"] = list(dataclasses.astuple(init))
        else:
            raise ConfigError("hh estimation needs a 'Y' or a 'V' column")
        result = estimate_hh(zeta, channel="zeta" if source == "reconstructed" else "Y",
                             drift_term=not args.literal_tau)
        extra = {"model": "hh", "source": source}
    else:
        if "Y" not in path:
            raise ConfigError("ou-trend estimation needs a 'Y' column")
        p = args.p if args.p is not None else 1
        config["p"] = p
        try:
            result = estimate(path, p)
        except EstimatorError as exc:
            raise ConfigError(str(exc)) from exc
        extra = {"model": "ou-trend", "p": p}
    dump_json(with_provenance(_estimation_payload(result, extra), config, None), args.out)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    path = read_path_csv(args.input)
    if "V" not in path:
        raise ConfigError("reconstruction needs a 'V' column")
    init = parse_init(args.init, args.x0)
    zeta = reconstruct_input(path.select("V"), init, HHParams(theta=1.0))
    gating = reconstruct_gating(path.select("V"), init.gating())
    out = SamplePath(path.delta, {"V": path["V"], "n": gating["n"], "m": gating["m"],
                                  "h": gating["h"], "zeta": zeta["zeta"]})
    write_path_csv(out, ("V", "n", "m", "h", "zeta"), args.out)
    return EXIT_OK


def build_study_config(args) -> StudyConfig:
    settings = read_study_config(args.config) if args.config else {}
    flags = {"model": args.model, "theta": args.theta, "tau": args.tau_opt, "c": args.c_opt,
             "x0": args.x0_opt, "n": args.n, "delta": args.delta, "replications": args.replications,
             "master_seed": args.seed_opt, "rel_tol": args.rel_tol,
             "hh_init": float_list(args.init) if args.init else None}
    settings.update({k: v for k, v in flags.items() if v is not None})
    if args.submodel is not None:
        if args.submodel != "theta0-fixed":
            raise ConfigError("the only hh submodel is 'theta0-fixed'")
        settings.setdefault("model", "hh")
        if settings["model"] != "hh":
            raise ConfigError("--submodel applies to --model hh")
    if settings.get("model") == "hh" and "theta" not in settings:
        settings["theta"] = (6.0,)
    try:
        return StudyConfig(**{k: coerce_study_value(k, v) for k, v in settings.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_mc_study(args) -> int:
    config = build_study_config(args)
    strict_failure = None
    try:
        summary = run_study(config, workers=args.workers, strict=True)
    except StudyFailedError as exc:
        summary = exc.summary
        strict_failure = str(exc)
    except (FloatingPointError, AssertionError) as exc:
        raise SimulationError(str(exc)) from exc
    payload = summary.to_dict()
    if strict_failure:
        payload["error"] = strict_failure
    dump_json(with_provenance(payload, config.as_dict(), config.master_seed), args.out)
    if args.errors_csv:
        header = ",".join(["replication"] + summary.labels)
        rows = np.column_stack([np.arange(summary.replications), summary.errors])
        np.savetxt(args.errors_csv, rows, fmt="%.17g", delimiter=",", header=header, comments="")
    if strict_failure or (args.check and not summary.passed):
        return EXIT_STUDY
    return EXIT_OK


def cmd_lan_check(args) -> int:
    params = _ou_params(args)
    horizons = args.horizons or (250.0, 1000.0, 4000.0)
    delta = args.delta if args.delta is not None else 0.01
    table = lan_remainder_study(params, horizons, args.replications or 100, args.radius, delta,
                                args.seed, workers=args.workers)
    rows = [{"n": n, "median_abs_remainder": float(np.median(v)), "mean_abs_remainder": float(v.mean())}
            for n, v in table.items()]
    medians = [r["median_abs_remainder"] for r in rows]
    config = {"command": "lan-check", "theta": list(params.theta), "c": params.c, "x0": params.x0,
              "horizons": list(horizons), "replications": args.replications or 100,
              "radius": args.radius, "delta": delta}
    payload = {"rows": rows, "decreasing": bool(all(a > b for a, b in zip(medians, medians[1:])))}
    dump_json(with_provenance(payload, config, args.seed), args.out)
    return EXIT_OK


def cmd_probe(args) -> int:
    tau = args.tau
    if args.kind == "invariant":
        horizons = args.horizons or (500.0, 1000.0, 2000.0)
        delta = args.delta if args.delta is not None else 0.01
        rows = weighted_average_probe(tau, args.c, args.x0, args.f, args.ell, horizons, delta,
                                       RngSpec(args.seed, args.stream))
        payload = {"rows": [{"r": r, "value": v} for r, v in rows]}
        config = {"command": "probe", "kind": "invariant", "f": args.f, "ell": args.ell,
                  "tau": tau, "c": args.c, "x0": args.x0, "horizons": list(horizons), "delta": delta}
    else:
        n = args.n if args.n is not None else 2000.0
        delta = args.delta if args.delta is not None else 0.01
        emp, target = scaled_moment_probe(tau, args.c, args.x0, args.ell, n,
                                              args.replications or 500, args.seed, delta, args.workers)
        payload = {"empirical_cov": emp, "target_cov": target}
        config = {"command": "probe", "kind": "moments", "ell": args.ell, "tau": tau, "c": args.c,
                  "x0": args.x0, "n": n, "delta": delta, "replications": args.replications or 500}
    dump_json(with_provenance(payload, config, args.seed), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- argument parser

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed (u64)")
    parser.add_argument("--delta", type=float, help="grid step")
    parser.add_argument("--n", type=float, help="horizon")
    parser.add_argument("--out", default="-", help="output file ('-' for stdout)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: $OTL_WORKERS or 1)")
    parser.add_argument("-v", "--verbose", action="store_true")


def _model(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=("ou-trend", "hh"), default="ou-trend")
    parser.add_argument("--p", type=int, help="trend degree")
    parser.add_argument("--theta", type=float_list, help="trend coefficients, or the hh input drift")
    parser.add_argument("--tau", type=float, default=1.0)
    parser.add_argument("--c", type=float, default=1.0)
    parser.add_argument("--x0", type=float, default=0.0)
    parser.add_argument("--init", help="hh start: 'rest', 'rest:V' or V,n,m,h[,Y]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated path to CSV")
    _common(p)
    _model(p)
    p.add_argument("--stream", type=int, default=0, help="stream index under the master seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate parameters from a path CSV")
    _common(p)
    _model(p)
    p.add_argument("input")
    p.add_argument("--reconstruct", action="store_true",
                   help="hh: ignore a Y column and reconstruct the input from V")
    p.add_argument("--literal-tau", action="store_true",
                   help="hh: drop the slope term from the tau estimator")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("reconstruct", help="recover gating and accumulated input from a V path")
    _common(p)
    p.add_argument("input")
    p.add_argument("--init", help="'rest', 'rest:V' or V,n,m,h[,Y]")
    p.add_argument("--x0", type=float, default=0.0, help="Y at time 0 when --init omits it")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("mc-study", help="Monte Carlo study of the rescaled estimation errors")
    _common(p)
    p.set_defaults(seed=None)
    p.add_argument("--config", help="flat key = value study file; flags override it")
    p.add_argument("--model", choices=("ou-trend", "hh"))
    p.add_argument("--submodel", help="hh: 'theta0-fixed' (the only one)")
    p.add_argument("--theta", help="comma-separated coefficients")
    p.add_argument("--tau", dest="tau_opt", type=float)
    p.add_argument("--c", dest="c_opt", type=float)
    p.add_argument("--x0", dest="x0_opt", type=float)
    p.add_argument("--init", help="hh start V,n,m,h[,Y]")
    p.add_argument("--replications", "-M", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--errors-csv", help="also write the rescaled errors per replication")
    p.add_argument("--check", action="store_true", help="exit 4 when a tolerance is missed")
    p.set_defaults(func=cmd_mc_study)

    p = sub.add_parser("lan-check", help="median |LAN remainder| over horizons")
    _common(p)
    _model(p)
    p.add_argument("--horizons", type=float_list)
    p.add_argument("--replications", "-M", type=int)
    p.add_argument("--radius", type=float, default=2.0, help="h is drawn uniformly from this ball")
    p.set_defaults(func=cmd_lan_check)

    p = sub.add_parser("probe", help="OU functional probes")
    _common(p)
    p.add_argument("kind", choices=("invariant", "moments"), metavar="{invariant,moments}")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--f", default="square", help="identity, square, abs or indicator(a,b)")
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--horizons", type=float_list)
    p.add_argument("--replications", "-M", type=int)
    p.add_argument("--stream", type=int, default=0)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "mc-study":
        args.seed_opt = args.seed
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SimulationError as exc:
        log.error("simulation failed: %s", exc)
        return EXIT_SIMULATION
    except (ConfigError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
