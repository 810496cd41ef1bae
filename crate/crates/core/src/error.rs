use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("invalid distribution ({what}): {reason}")]
    InvalidDistribution { what: String, reason: String },

    #[error("invalid fragment: {0}")]
    InvalidFragment(String),

    #[error("invalid ontic model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error(
        "preparation `{prep}` is ambiguous for {measurement}={outcome}: densities disagree by {spread:e}"
    )]
    AmbiguousPreparation {
        prep: String,
        measurement: String,
        outcome: String,
        spread: f64,
    },

    #[error("perturbation undefined: preparation has zero mass on the outcome cell")]
    PerturbationUndefined,

    #[error("empty generator list")]
    EmptyGenerators,

    #[error("alpha must be nonnegative, got {0}")]
    NegativeAlpha(f64),

    #[error("table is missing entry {measurement}/{preparation}")]
    MissingRole {
        measurement: String,
        preparation: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
