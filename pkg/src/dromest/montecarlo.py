"""Synthetic instances, trial batches and empirical-versus-predicted summaries."""

from __future__ import annotations

import hashlib
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import scalar
from .errors import ConfigError, ExperimentError, SolverError
from .finite_sample import Dataset, FitOptions, FitResult, fit_dre, fit_w1, fit_w2_smooth, fit_w2_squared
from .noise import sample
from .saddle import Prediction, SolverConfig, solve
from .scalar import ProblemSpec

SPHERE = "sphere_scaled"
GAUSSIAN_ENTRIES = "gaussian_entries"
THETA0_STYLES = (SPHERE, GAUSSIAN_ENTRIES)
MAX_FAILURE_FRACTION = 0.10
_MASK64 = (1 << 64) - 1


def trial_seed(base_seed: int, d: int, n: int, trial: int) -> int:
    """``base_seed XOR hash(d, n, trial)`` as an unsigned 64-bit integer."""
    digest = hashlib.blake2b(struct.pack("<qqq", d, n, trial), digest_size=8).digest()
    return (int(base_seed) & _MASK64) ^ int.from_bytes(digest, "little")


def generate_instance(problem: ProblemSpec, d: int, n: int, seed, theta0_style: str = SPHERE) -> Dataset:
    if d < 1 or n < 1:
        raise ConfigError("d and n must be at least 1")
    if theta0_style not in THETA0_STYLES:
        raise ConfigError(f"theta0_style must be one of {THETA0_STYLES}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d)) / math.sqrt(d)
    sig = problem.sigma_theta0
    if theta0_style == SPHERE:
        v = rng.standard_normal(d)
        theta0 = v * (sig * math.sqrt(d) / np.linalg.norm(v))
    else:
        theta0 = sig * rng.standard_normal(d)
    z = sample(problem.noise, rng, n)
    return Dataset(A, A @ theta0 + z, z, theta0)


def fit_for_mode(problem: ProblemSpec, data: Dataset, opts: FitOptions = FitOptions()) -> FitResult:
    """Fit with the estimator that matches ``problem.mode`` and its size scaling."""
    mode, n, d = problem.mode, data.n, data.d
    if mode == scalar.W1:
        return fit_w1(data, problem.loss, problem.epsilon0 / math.sqrt(n), opts)
    if mode == scalar.W2_DRO:
        return fit_w2_smooth(data, problem.loss, problem.epsilon0 / n, problem.R_theta, opts)
    if mode == scalar.W2_DRO_SQUARED:
        return fit_w2_squared(data, problem.epsilon0 / n, opts)
    return fit_dre(data, problem.loss, d * problem.lambda0, problem.R_theta, opts)


@dataclass(frozen=True)
class ExperimentSpec:
    problem: ProblemSpec
    dims: tuple
    trials: int = 1
    base_seed: int = 0
    theta0_style: str = SPHERE

    def __post_init__(self):
        dims = tuple((int(d), int(n)) for d, n in self.dims)
        if not dims:
            raise ConfigError("at least one (d, n) pair is required")
        for d, n in dims:
            if d < 1 or n < 1:
                raise ConfigError(f"invalid dimensions ({d}, {n})")
            if abs(d / n - self.problem.rho) > 1.0 / n:
                raise ConfigError(f"(d, n) = ({d}, {n}) is inconsistent with rho = {self.problem.rho}")
        object.__setattr__(self, "dims", dims)
        if int(self.trials) < 1:
            raise ConfigError("trials must be at least 1")
        object.__setattr__(self, "trials", int(self.trials))
        if self.theta0_style not in THETA0_STYLES:
            raise ConfigError(f"theta0_style must be one of {THETA0_STYLES}")
        object.__setattr__(self, "base_seed", int(self.base_seed) & _MASK64)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "dims": [list(p) for p in self.dims],
            "trials": self.trials,
            "base_seed": self.base_seed,
            "theta0_style": self.theta0_style,
        }


@dataclass(frozen=True)
class TrialRecord:
    d: int
    n: int
    trial: int
    seed: int
    error: float
    iterations: int
    converged: bool
    failure: str | None = None


@dataclass(frozen=True)
class DimSummary:
    d: int
    n: int
    mean: float
    std: float
    se: float
    successes: int
    failures: int
    relative_gap: float | None


@dataclass
class ExperimentSummary:
    spec: ExperimentSpec
    records: list
    dims: list
    prediction: Prediction | None = None
    meta: dict = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(s.failures for s in self.dims)


def run_trial(spec: ExperimentSpec, d: int, n: int, trial: int, opts: FitOptions = FitOptions()) -> TrialRecord:
    seed = trial_seed(spec.base_seed, d, n, trial)
    data = generate_instance(spec.problem, d, n, seed, spec.theta0_style)
    try:
        res = fit_for_mode(spec.problem, data, opts)
    except SolverError as exc:
        return TrialRecord(d, n, trial, seed, math.nan, 0, False, f"{type(exc).__name__}: {exc}")
    return TrialRecord(d, n, trial, seed, res.normalized_error, res.iterations, res.converged)


def relative_gap(mean: float, target: float) -> float:
    # falls back to the absolute gap when the target is zero
    return abs(mean - target) / target if target > 0 else abs(mean - target)


def summarize(spec: ExperimentSpec, records, prediction: Prediction | None) -> list:
    out = []
    target = None if prediction is None else prediction.alpha_star_sq
    for d, n in spec.dims:
        recs = [r for r in records if r.d == d and r.n == n]
        ok = np.array([r.error for r in recs if r.failure is None], dtype=float)
        fails = len(recs) - ok.size
        if ok.size == 0:
            raise ExperimentError(f"every trial failed at (d, n) = ({d}, {n})")
        mean = float(ok.mean())
        std = float(ok.std(ddof=1)) if ok.size > 1 else 0.0
        se = std / math.sqrt(ok.size)
        gap = None if target is None else relative_gap(mean, target)
        out.append(DimSummary(d, n, mean, std, se, int(ok.size), fails, gap))
    return out


def run_experiment(
    spec: ExperimentSpec,
    opts: FitOptions = FitOptions(),
    solver_cfg: SolverConfig = SolverConfig(),
    predict: bool = True,
    threads: int = 1,
) -> ExperimentSummary:
    """Run every trial, aggregate per ``(d, n)`` and attach the asymptotic prediction.

    Records are ordered by ``(d, n, trial)`` whatever the thread count.
    """
    jobs = [(d, n, k) for d, n in spec.dims for k in range(spec.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda j: run_trial(spec, *j, opts), jobs))
    else:
        records = [run_trial(spec, *j, opts) for j in jobs]
    failed = sum(r.failure is not None for r in records)
    if failed > MAX_FAILURE_FRACTION * len(records):
        raise ExperimentError(f"{failed} of {len(records)} trials failed")
    prediction = solve(spec.problem, solver_cfg) if predict else None
    return ExperimentSummary(spec, records, summarize(spec, records, prediction), prediction)
