"""Filtering, retrofiltering and smoothing of a monitored qubit."""

from .errors import (
    ConfigError,
    DegenerateEffectError,
    ImpossibleJumpError,
    InconsistentRecordError,
    IntegratorStepError,
    NumericalError,
    PreconditionError,
    QsmoothError,
    SolverError,
    ValidationError,
)
from .fpe import FpeConfig, ThetaDistribution, evolve_to, stationary_distribution
from .pre_solver import PreEnsemble, published_ensemble, solve_wlo
from .qubit import BlochVector, ModelParams
from .retrofilter import RetroConfig, backward_pass, pre_jump_effect_path
from .scenarios import ScenarioConfig, run_scenario
from .trajectories import HomodyneConfig, TimeGrid, sample_ensemble, sample_trajectory

__version__ = "0.1.0"

__all__ = [
    "BlochVector",
    "ConfigError",
    "DegenerateEffectError",
    "FpeConfig",
    "HomodyneConfig",
    "ImpossibleJumpError",
    "InconsistentRecordError",
    "IntegratorStepError",
    "ModelParams",
    "NumericalError",
    "PreEnsemble",
    "PreconditionError",
    "QsmoothError",
    "RetroConfig",
    "ScenarioConfig",
    "SolverError",
    "ThetaDistribution",
    "TimeGrid",
    "ValidationError",
    "backward_pass",
    "evolve_to",
    "pre_jump_effect_path",
    "published_ensemble",
    "run_scenario",
    "sample_ensemble",
    "sample_trajectory",
    "solve_wlo",
    "stationary_distribution",
]
