"""Exact modelling and auditing of fair classifiers under composition."""

from ._jit import backend
from .cohort import (
    CohortMode,
    CohortSpec,
    SelectionEstimate,
    check_ws_precondition,
    online_cohort,
    permute_then_classify,
    ptc_selection_probability,
    statistical_parity_online,
    weighted_sampling,
    weighted_sampling_many,
    ws_pairwise_coefficient,
    ws_selection_probability,
    ws_set_probabilities,
)
from .competitive import (
    TieBreaker,
    allocation,
    audit_multiple_task_fairness,
    boosted,
    compose_competitive,
    find_violation_witness,
    randomize_then_classify,
    utility_loss,
)
from .constrained import (
    ContextualFairnessWarning,
    OrderingDistribution,
    RescaledClassifier,
    SubsetDistribution,
    check_constrained_feasibility,
    copy_behavior_extension,
    estimate_gamma_partition,
    intragroup_ptc,
    intragroup_selection_probability,
    positive_weights_rescale,
    run_subset_experiment,
)
from .construct import (
    AllocationTarget,
    build_fair_classifier,
    fair_add,
    maximize_pair_distance,
    optimize_fair_classifier,
    set_pair_ratio,
)
from .core import (
    DEFAULT_EPSILON,
    FairnessError,
    FairnessReport,
    GroupStructure,
    InfeasibleError,
    InvalidMetricError,
    SoftClassifier,
    SystemOutcome,
    TaskMetric,
    Universe,
    audit_conditional_parity,
    audit_individual_fairness,
    group_means,
    validate_metric,
)
from .experiments import generate_population, run_competitive_experiment, run_scenario
from .functional import (
    and_unfairness_witness,
    check_heavy_or,
    compose_and,
    compose_or,
    compose_threshold,
    compose_xor_exactly_one,
    group_into_heavy_ors,
    or_different_count_witness,
    or_same_set_witness,
)
from .group_audit import (
    alpha_perturbation_witness,
    audit_parity_under_composition,
    audit_subgroup_parity,
    check_unrelated_tasks,
    multi_task_parity_residual,
)
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
