"""Run configuration: one JSON document, validated before any work starts."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError
from .finite_sample import FitOptions
from .montecarlo import SPHERE, THETA0_STYLES, ExperimentSpec
from .noise import QuadratureConfig
from .saddle import SolverConfig
from .scalar import ProblemSpec

COMMANDS = ("predict", "simulate", "sweep", "validate-envelopes")
SWEEP_AXES = ("epsilon0", "lambda0", "rho")
THREADS_ENV = "DROMEST_THREADS"
_TOP_LEVEL = {"command", "problem", "quadrature", "solver", "experiment", "sweep", "envelopes", "threads"}


@dataclass(frozen=True)
class ExperimentBlock:
    """Dimensions are either explicit ``(d, n)`` pairs or ``d`` values with ``n = round(d / rho)``."""

    dims: tuple | None
    d_values: tuple | None
    trials: int
    base_seed: int
    theta0_style: str
    fit: FitOptions

    def dims_for(self, rho: float) -> tuple:
        if self.dims is not None:
            return self.dims
        return tuple((d, max(1, int(round(d / rho)))) for d in self.d_values)

    def spec_for(self, problem: ProblemSpec) -> ExperimentSpec:
        return ExperimentSpec(problem, self.dims_for(problem.rho), self.trials, self.base_seed, self.theta0_style)

    def to_dict(self) -> dict:
        out = {
            "trials": self.trials,
            "base_seed": self.base_seed,
            "theta0_style": self.theta0_style,
            "max_iter": self.fit.max_iter,
            "tol": self.fit.tol,
        }
        if self.dims is not None:
            out["dims"] = [list(p) for p in self.dims]
        else:
            out["d"] = list(self.d_values)
        return out


@dataclass(frozen=True)
class SweepBlock:
    axis: str
    values: tuple
    simulate: bool

    def to_dict(self) -> dict:
        return {"axis": self.axis, "values": list(self.values), "simulate": self.simulate}


@dataclass(frozen=True)
class RunConfig:
    command: str
    problem: ProblemSpec | None
    quadrature: QuadratureConfig
    solver: SolverConfig
    experiment: ExperimentBlock | None
    sweep: SweepBlock | None
    envelopes: dict
    threads: int

    def problems(self) -> list:
        """The problem at every sweep point (a single entry outside sweeps)."""
        if self.sweep is None:
            return [self.problem]
        return [_with(self.problem, self.sweep.axis, v) for v in self.sweep.values]

    def to_dict(self) -> dict:
        """Every field including defaults, for the output metadata."""
        return {
            "command": self.command,
            "problem": None if self.problem is None else self.problem.to_dict(),
            "quadrature": self.quadrature.to_config(),
            "solver": {
                "tol": self.solver.tol,
                "certify": self.solver.certify,
                "slope_step": self.solver.slope_step,
                "flat_step": self.solver.flat_step,
            },
            "experiment": None if self.experiment is None else self.experiment.to_dict(),
            "sweep": None if self.sweep is None else self.sweep.to_dict(),
            "envelopes": dict(self.envelopes),
            "threads": self.threads,
        }


def _with(problem: ProblemSpec, axis: str, value: float) -> ProblemSpec:
    try:
        return replace(problem, **{axis: float(value)})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise ConfigError(f"sweep point {axis}={value}: {exc}") from exc
        raise ConfigError(str(exc)) from exc


def _int(cfg: dict, key: str, default: int, lo: int = 1) -> int:
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v) or int(v) < lo:
        raise ConfigError(f"{key} must be an integer >= {lo}, got {v!r}")
    return int(v)


def _experiment(cfg: dict | None, seed_override: int | None) -> ExperimentBlock:
    cfg = dict(cfg or {})
    unknown = set(cfg) - {"dims", "d", "trials", "base_seed", "theta0_style", "max_iter", "tol"}
    if unknown:
        raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
    if ("dims" in cfg) == ("d" in cfg):
        raise ConfigError("experiment needs exactly one of 'dims' ([[d, n], ...]) or 'd' ([d, ...])")
    dims = d_values = None
    try:
        if "dims" in cfg:
            dims = tuple((int(d), int(n)) for d, n in cfg["dims"])
        else:
            d_values = tuple(int(d) for d in cfg["d"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed experiment dimensions: {exc}") from exc
    if not (dims or d_values):
        raise ConfigError("experiment dimensions must not be empty")
    style = cfg.get("theta0_style", SPHERE)
    if style not in THETA0_STYLES:
        raise ConfigError(f"theta0_style must be one of {THETA0_STYLES}")
    seed = cfg.get("base_seed", 0) if seed_override is None else seed_override
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("base_seed must be a nonnegative integer")
    tol = float(cfg.get("tol", FitOptions.tol))
    if not 0 < tol < 1:
        raise ConfigError("experiment.tol must lie in (0, 1)")
    fit = FitOptions(max_iter=_int(cfg, "max_iter", FitOptions.max_iter), tol=tol)
    return ExperimentBlock(dims, d_values, _int(cfg, "trials", 1), seed, style, fit)


def _sweep(cfg: dict | None) -> SweepBlock:
    if not isinstance(cfg, dict):
        raise ConfigError("sweep block is required for the sweep command")
    unknown = set(cfg) - {"axis", "values", "start", "stop", "num", "scale", "simulate"}
    if unknown:
        raise ConfigError(f"unknown sweep fields: {sorted(unknown)}")
    axis = cfg.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}")
    if "values" in cfg:
        values = tuple(float(v) for v in cfg["values"])
    else:
        try:
            start, stop, num = float(cfg["start"]), float(cfg["stop"]), int(cfg["num"])
        except KeyError as exc:
            raise ConfigError(f"sweep grid needs 'values' or start/stop/num (missing {exc})") from exc
        scale = cfg.get("scale", "linear")
        if scale == "log":
            if not (start > 0 and stop > 0):
                raise ConfigError("a log grid needs positive endpoints")
            values = tuple(float(v) for v in np.geomspace(start, stop, num)) if num >= 1 else ()
        elif scale == "linear":
            values = tuple(float(v) for v in np.linspace(start, stop, num)) if num >= 1 else ()
        else:
            raise ConfigError("sweep.scale must be 'log' or 'linear'")
    if len(values) < 2:
        raise ConfigError("a sweep grid needs at least 2 points")
    if any(not math.isfinite(v) for v in values):
        raise ConfigError("sweep values must be finite")
    return SweepBlock(axis, values, bool(cfg.get("simulate", False)))


def resolve_threads(cli_value: int | None, cfg_value) -> int:
    """``--threads`` beats the environment variable, which beats the config file."""
    for source, v in (("--threads", cli_value), (THREADS_ENV, os.environ.get(THREADS_ENV)), ("threads", cfg_value)):
        if v is None:
            continue
        try:
            n = int(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source} must be an integer, got {v!r}") from exc
        if n < 1:
            raise ConfigError(f"{source} must be at least 1")
        return n
    return 1


def parse_config(raw: dict, command: str, seed: int | None = None, threads: int | None = None) -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(raw, dict):
        raise ConfigError("the configuration must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level fields: {sorted(unknown)}")
    if raw.get("command", command) != command:
        raise ConfigError(f"config is for {raw['command']!r} but the command is {command!r}")
    try:
        quad = QuadratureConfig.from_config(raw.get("quadrature"))
    except (DomainError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    solver = SolverConfig.from_config(raw.get("solver"), quad)
    envelopes = dict(raw.get("envelopes") or {})
    unknown = set(envelopes) - {"huber_delta", "huber_coefficient_error"}
    if unknown:
        raise ConfigError(f"unknown envelopes fields: {sorted(unknown)}")
    nthreads = resolve_threads(threads, raw.get("threads"))

    problem = experiment = sweep = None
    if command != "validate-envelopes":
        if "problem" not in raw:
            raise ConfigError("a problem block is required")
        problem = ProblemSpec.from_dict(raw["problem"])
    if command == "simulate" or (command == "sweep" and (raw.get("sweep") or {}).get("simulate")):
        experiment = _experiment(raw.get("experiment"), seed)
    if command == "sweep":
        sweep = _sweep(raw.get("sweep"))
    cfg = RunConfig(command, problem, quad, solver, experiment, sweep, envelopes, nthreads)
    # validate every sweep point and experiment shape up front
    if problem is not None:
        for p in cfg.problems():
            if experiment is not None:
                experiment.spec_for(p)
    return cfg


def load_config(path: str, command: str, seed: int | None = None, threads: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, command, seed, threads)
