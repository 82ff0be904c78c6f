"""Extreme value laws for sequential β-map systems and quenched random subshifts.

Submodules
----------
circle_maps
    β-maps, slope schedules and exact orbits.
observables
    Observables maximised at a point of the circle.
invariant_measure
    Parry density, threshold schedules and Ulam discretisation.
transfer
    Transfer operators, loss of memory and decay of correlations.
blocking
    Block construction and exact finite-space inequality checks.
evl_engine
    Monte Carlo extreme value experiments and extremal index estimators.
random_subshift
    Quenched experiments on random subshifts of finite type.
scenarios, cli
    Named reproducible runs and the ``evl-lab`` command.
"""

from .blocking import (BlockConstructionError, BlockPartition, FiniteEventSpace, annuli_difference_check,
                       audit_partition, build_blocks, gap_lemma_check)
from .circle_maps import BetaMap, MapSequenceSpec, PrecisionDowngradeWarning, beta_map_apply, beta_sequence
from .evl_engine import (EIReport, ExperimentSpec, NumericalFailure, UnsupportedCaseError, check_D_prime_statistic,
                         check_D_statistic, detect_q, empirical_Pn, estimate_extremal_index, run_experiment,
                         simulate_max_process, theoretical_theta)
from .invariant_measure import (ParryDensity, StationaryConvergenceError, parry_density, threshold_schedule,
                                ulam_discretize, ulam_stationary)
from .observables import Observable, circle_distance
from .random_subshift import (QuenchedRealization, SubshiftSpec, quenched_evl_experiment, sample_measure_cylinder,
                              sample_omega, subshift_theta)
from .transfer import TransferComposition, correlation_decay_estimate, loss_of_memory_error, transfer_pointwise

__version__ = "0.1.0"

__all__ = [
    "BetaMap", "BlockConstructionError", "BlockPartition", "EIReport", "ExperimentSpec", "FiniteEventSpace",
    "MapSequenceSpec", "NumericalFailure", "Observable", "ParryDensity", "PrecisionDowngradeWarning",
    "QuenchedRealization", "StationaryConvergenceError", "SubshiftSpec", "TransferComposition",
    "UnsupportedCaseError", "annuli_difference_check", "audit_partition", "beta_map_apply", "beta_sequence",
    "build_blocks", "check_D_prime_statistic", "check_D_statistic", "circle_distance", "correlation_decay_estimate",
    "detect_q", "empirical_Pn", "estimate_extremal_index", "gap_lemma_check", "loss_of_memory_error",
    "parry_density", "quenched_evl_experiment", "run_experiment", "sample_measure_cylinder", "sample_omega",
    "simulate_max_process", "subshift_theta", "theoretical_theta", "threshold_schedule", "transfer_pointwise",
    "ulam_discretize", "ulam_stationary",
]
