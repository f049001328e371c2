"""Sparse recovery from saturated measurements."""

from .model import GroundTruth, SaturatedDataset, partition_measurements
from .prox import Penalty, PenaltyKind, prox_ball_constrained, prox_separable
from .solver import RecoveryResult, SolverConfig, SolverDivergence, solve_lasso, solve_m1bitcsl
from .synth import ExperimentSpec, synthesize

__version__ = "0.1.0"

__all__ = [
    "ExperimentSpec", "GroundTruth", "Penalty", "PenaltyKind", "RecoveryResult",
    "SaturatedDataset", "SolverConfig", "SolverDivergence", "partition_measurements",
    "prox_ball_constrained", "prox_separable", "solve_lasso", "solve_m1bitcsl", "synthesize",
]
