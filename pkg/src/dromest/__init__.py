"""Asymptotic error predictions for Wasserstein robust linear regression.

The package pairs scalar minimax characterisations of the limiting
normalised error with finite-sample solvers for the same estimators, so that
predictions can be checked against simulation.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConcavityViolation,
    ConfigError,
    Degenerate,
    DivergedError,
    DomainError,
    DromestError,
    ExperimentError,
    NotSmooth,
    SolverError,
    UnboundedMinimizer,
)
from .finite_sample import Dataset, FitOptions, FitResult, fit_dre, fit_w1, fit_w2_smooth, fit_w2_squared, inner_sup, normalized_error  # noqa: E402
from .losses import LossModel  # noqa: E402
from .montecarlo import ExperimentSpec, ExperimentSummary, generate_instance, run_experiment  # noqa: E402
from .noise import NoiseModel, QuadratureConfig  # noqa: E402
from .saddle import Prediction, SolverConfig, solve  # noqa: E402
from .scalar import ProblemSpec  # noqa: E402

__all__ = [
    "__version__",
    "ConcavityViolation",
    "ConfigError",
    "Dataset",
    "Degenerate",
    "DivergedError",
    "DomainError",
    "DromestError",
    "ExperimentError",
    "ExperimentSpec",
    "ExperimentSummary",
    "FitOptions",
    "FitResult",
    "LossModel",
    "NoiseModel",
    "NotSmooth",
    "Prediction",
    "ProblemSpec",
    "QuadratureConfig",
    "SolverConfig",
    "SolverError",
    "UnboundedMinimizer",
    "fit_dre",
    "fit_w1",
    "fit_w2_smooth",
    "fit_w2_squared",
    "generate_instance",
    "inner_sup",
    "normalized_error",
    "run_experiment",
    "solve",
]
