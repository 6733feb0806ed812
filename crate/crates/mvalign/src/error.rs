use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{what} must be positive")]
    NonPositive { what: &'static str },

    #[error("anchor views must have equal row counts: {left} vs {right}")]
    AnchorMismatch { left: usize, right: usize },

    #[error("matrix factorization failed after jitter escalation: {0}")]
    NumericalConditioning(&'static str),

    #[error("no shared latent dimensions at threshold {threshold}; alignment impossible")]
    NoSharedSubspace { threshold: f64 },

    /// No inference restart converged; carries the best partial optimum found.
    #[error("latent inference did not converge for any restart (best bound {best_bound})")]
    InferenceFailure {
        best_mean: Vec<f64>,
        best_variance: Vec<f64>,
        best_bound: f64,
    },

    /// The streaming aligner ran out of input; carries the matches made so far
    /// as (view-1 index, view-2 arrival index) pairs.
    #[error("stream ended after {got} of {expected} points; partial result is incomplete")]
    IncompleteStream {
        expected: usize,
        got: usize,
        matched: Vec<(usize, usize)>,
    },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/config problems, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ShapeMismatch { .. }
            | Error::AnchorMismatch { .. }
            | Error::InvalidPermutation(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::MissingArtifact(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::NonFinite(_)
            | Error::NonPositive { .. }
            | Error::NumericalConditioning(_)
            | Error::NoSharedSubspace { .. }
            | Error::InferenceFailure { .. }
            | Error::IncompleteStream { .. } => 3,
        }
    }
}
