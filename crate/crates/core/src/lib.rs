//! Analysis toolkit for mirroring (Sybil) attacks on majority-vote data
//! feeds.
//!
//! Oracles report a discrete data point through a shared confusion matrix,
//! a majority vote decides the output, and the task reward is split among
//! the oracles that reported it in proportion to `stake^d`. A user may run
//! several oracles that all echo its report. This crate computes expected
//! payoffs and error rates for such strategies, exactly or by Monte Carlo,
//! and searches for the smallest `d` that makes one oracle per user an
//! equilibrium.

pub mod aggregation;
pub mod error;
pub mod incentive;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod outcome;
pub mod payoff;
pub mod solver;

pub use aggregation::{majority_vote, AggregateResult, VoteProfile};
pub use error::{Error, Result};
pub use incentive::{
    distribute_rewards, reward_factor, settle_round, stake_power, MechanismParams, RewardOutcome,
};
pub use ingest::{estimate_confusion, read_annotations, write_annotations, AnnotationRecord, IngestReport, IngestSettings};
pub use metrics::{
    error_rate_exact, error_rate_mc, run_experiment, write_sweep_csv, ExperimentSection,
    ExperimentSpec, SweepMethod, SweepRow,
};
pub use model::{
    reference_config, sample_report, validate_config, ClassLabel, ClassPrior, ConfigDocument,
    ConfusionMatrix, Strategy, SystemConfig, UserProfile, ValidationReport,
};
pub use outcome::{OutcomeProfile, DEFAULT_ENUMERATION_BUDGET};
pub use payoff::{
    best_response_c, expected_payoff, expected_payoff_exact, expected_payoff_mc,
    optimal_allocation, EstimateKind, Method, PayoffEstimate, PayoffQuery,
};
pub use solver::{
    audit_grid, find_d_opt, find_d_opt_from_oracle_stakes, verify_nash, verify_nash_with,
    DOptSolution, GridAudit, NashCertificate, NashCheck, NashEvaluator, SolverSettings,
};
