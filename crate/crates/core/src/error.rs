use thiserror::Error;

/// Errors produced by the feedsim core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("class label {label} out of range 1..={num_classes}")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("oracle count {oracle_count} infeasible for total stake {total_stake}")]
    InfeasibleOracleCount { total_stake: u32, oracle_count: u32 },

    #[error("unknown user {0}")]
    UnknownUser(usize),

    #[error("empty vote profile")]
    EmptyProfile,

    #[error("vote profile has {reports} reports but {multiplicities} multiplicities")]
    ProfileLengthMismatch { reports: usize, multiplicities: usize },

    #[error("stake must be at least 1, got {0}")]
    StakeBelowMinimum(u32),

    #[error("exponent d must be >= 1, got {0}")]
    ExponentBelowOne(f64),

    #[error("all reward factors are zero")]
    AllZeroFactors,

    #[error("exact enumeration needs {terms} terms, budget is {budget}; use Monte Carlo")]
    BudgetExceeded { terms: u128, budget: u128 },

    #[error("sample count must be at least 1")]
    NoSamples,

    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),

    #[error(
        "no d <= {d_max} satisfies the equilibrium condition; tightest violation: user {user}, \
         c = {oracle_count}, mirror {payoff_mirror} > single {payoff_single}"
    )]
    NoEquilibrium {
        d_max: f64,
        user: usize,
        oracle_count: u32,
        payoff_single: f64,
        payoff_mirror: f64,
    },

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("ingest: {0}")]
    Ingest(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
