"""Simulation laboratory for episodic decision tasks with vector-valued
states and actively queried partial hindsight feedback.

Environments (including hard-to-learn reference constructions), three
learning algorithms (two exponential-weights query learners for
emission-free models and a confidence-set planner for noisy-emission
models), an exact small-instance oracle for ground-truth optimal values,
and a seeded benchmarking harness with CSV/SVG output.
"""

__version__ = "0.1.0"

from .core import (
    ConfigError,
    Dims,
    EpisodeTrace,
    Feedback,
    InfeasibleEvidenceError,
    OracleSizeError,
    StepRecord,
    UnsupportedFeedbackError,
    decode_state,
    encode_state,
    extract_hsi,
)
from .envs import (
    EnvModel,
    SampleRng,
    build_controlled_drift_instance,
    build_hard_instance_flat_emission,
    build_hard_instance_groups,
    build_hard_instance_tree,
    check_groups_combination,
    check_groups_same_substate,
    controlled_drift_candidates,
    derive_generator,
    estimate_cross_covariance,
    groups_state_vectors,
    min_partial_singular_value,
    random_independent_model,
)
from .agents import (
    EpsilonGreedySequenceAgent,
    FixedPolicyAgent,
    MarkovEpisodePolicy,
    OpmllAgent,
    OptllAgent,
    ScheduleError,
    UniformRandomAgent,
    run_episode,
)
from .oracle import (
    Belief,
    RegretSeries,
    belief_update,
    compute_regret,
    evaluate_markov_policy,
    mdp_optimal_value,
    optimal_value,
    oracle_report,
    trace_log_likelihood,
)
from .pors import (
    ConfidenceSet,
    PlanningContext,
    PorsAgent,
    TreePolicy,
    build_confidence_set,
    default_beta,
    enumerate_policies,
    evaluate_policy_value,
    feedback_log_likelihood,
    optimistic_plan,
    policy_value_table,
)
from .serialize import (
    dump_candidates,
    dump_model,
    load_candidates,
    load_model,
)
from .harness import (
    ExperimentConfig,
    ResultsTable,
    VerificationFailure,
    emit_plot_svg,
    load_config,
    read_results_csv,
    run_suite,
    verify_instance,
    write_results_csv,
)

__all__ = [
    "Belief",
    "ConfidenceSet",
    "ConfigError",
    "Dims",
    "EnvModel",
    "EpisodeTrace",
    "EpsilonGreedySequenceAgent",
    "ExperimentConfig",
    "Feedback",
    "FixedPolicyAgent",
    "InfeasibleEvidenceError",
    "MarkovEpisodePolicy",
    "OpmllAgent",
    "OptllAgent",
    "OracleSizeError",
    "PlanningContext",
    "PorsAgent",
    "RegretSeries",
    "ResultsTable",
    "SampleRng",
    "ScheduleError",
    "StepRecord",
    "TreePolicy",
    "UniformRandomAgent",
    "UnsupportedFeedbackError",
    "VerificationFailure",
    "belief_update",
    "build_confidence_set",
    "build_controlled_drift_instance",
    "build_hard_instance_flat_emission",
    "build_hard_instance_groups",
    "build_hard_instance_tree",
    "check_groups_combination",
    "check_groups_same_substate",
    "compute_regret",
    "controlled_drift_candidates",
    "decode_state",
    "default_beta",
    "derive_generator",
    "dump_candidates",
    "dump_model",
    "emit_plot_svg",
    "encode_state",
    "enumerate_policies",
    "estimate_cross_covariance",
    "evaluate_markov_policy",
    "evaluate_policy_value",
    "extract_hsi",
    "feedback_log_likelihood",
    "groups_state_vectors",
    "load_candidates",
    "load_config",
    "load_model",
    "mdp_optimal_value",
    "min_partial_singular_value",
    "optimal_value",
    "optimistic_plan",
    "oracle_report",
    "policy_value_table",
    "random_independent_model",
    "read_results_csv",
    "run_episode",
    "run_suite",
    "trace_log_likelihood",
    "verify_instance",
    "write_results_csv",
]
