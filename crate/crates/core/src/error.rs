use thiserror::Error;

/// Errors raised anywhere in the kernel / GP / codegen pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown kernel `{name}` at offset {offset}")]
    UnknownKernel { name: String, offset: usize },

    #[error("unknown hyperparameter `{name}` for {kernel} at offset {offset}")]
    UnknownHyperparameter {
        kernel: String,
        name: String,
        offset: usize,
    },

    #[error("invalid hyperparameter {name}={value}: {reason}")]
    InvalidHyperparameter {
        name: String,
        value: f64,
        reason: &'static str,
    },

    #[error("change window start {start} must be below end {end}")]
    InvalidWindow { start: f64, end: f64 },

    #[error("malformed expression: {0}")]
    MalformedExpr(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("matrix of size {size} is not positive definite even with the largest jitter")]
    NotPositiveDefinite { size: usize },

    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("structure search failed: {0}")]
    SearchFailed(String),

    #[error("emitted program does not reproduce the analytic posterior: {0}")]
    SemanticsMismatch(String),

    #[error("cannot read emitted program: {0}")]
    ProgramFormat(String),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "syntax",
            Error::UnknownKernel { .. } => "unknown_kernel",
            Error::UnknownHyperparameter { .. } => "unknown_hyperparameter",
            Error::InvalidHyperparameter { .. } => "invalid_hyperparameter",
            Error::InvalidWindow { .. } => "invalid_window",
            Error::MalformedExpr(_) => "malformed_expression",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::OptimizationFailed(_) => "optimization_failed",
            Error::SearchFailed(_) => "search_failed",
            Error::SemanticsMismatch(_) => "semantics_mismatch",
            Error::ProgramFormat(_) => "program_format",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
