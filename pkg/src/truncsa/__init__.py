"""Randomly truncated stochastic approximation with empirical diagnostics."""

__version__ = "0.1.0"

from .core import ChenState, StepRecord, Trajectory, run_batch, run_trajectory, step_chen, step_rm
from .diagnostics import (
    EnsembleReport,
    MartingaleMonitor,
    aggregate,
    convergence_report,
    monitor_update,
    predicted_bracket_bound,
    stabilization_report,
)
from .problems import (
    NoiseModel,
    StochasticProblem,
    check_h1,
    check_h3,
    make_convex_potential,
    make_cubic,
    make_linear,
    make_problem,
    sample_oracle,
)
from .rng import FixedNoise, RandomStream, derive_seed
from .schedules import CompactFamily, CustomGain, GainSchedule, check_h2, compact_index_containing, contains, gain
