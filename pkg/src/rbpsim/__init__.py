"""Reinforced branching processes with fitness: exact simulation and limit theory."""

from .engine import PopulationState, RunResult, Snapshot, SnapshotPlan, StopRule, init, run, step
from .fitness import FitnessDistribution
from .malthus import ModelParams, check_condensation, limit_measure, solve_lambda_star
from .mc import ExperimentConfig, convergence_sweep, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "FitnessDistribution", "ModelParams", "PopulationState", "RunResult",
    "Snapshot", "SnapshotPlan", "StopRule", "check_condensation", "convergence_sweep", "init",
    "limit_measure", "run", "run_experiment", "solve_lambda_star", "step",
]
