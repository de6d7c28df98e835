"""Simulation laboratory for linear stochastic growth on the integer lattice.

A population vector over Z^d is multiplied each step by an independent
random nonnegative band matrix with translation-invariant law and
independent columns. The package simulates the normalized evolution,
measures localization observables, evaluates the collision series of the
associated difference walk, and verifies the supporting inequalities by
independent oracles at small scale.
"""

from .disorder import DisorderStream
from .harness import ExperimentConfig, diagnose, phase_scan, run_ensemble
from .lattice import BudgetError, WeightField, initial_state
from .models import BUILTIN_KINDS, build_model

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_KINDS",
    "BudgetError",
    "DisorderStream",
    "ExperimentConfig",
    "WeightField",
    "build_model",
    "diagnose",
    "initial_state",
    "phase_scan",
    "run_ensemble",
    "__version__",
]
