use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while fitting or doing inference.
///
/// Variants split into two groups that the CLI maps to different exit codes:
/// input/configuration problems and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("failed to converge after {iterations} iterations: {reason}")]
    NonConvergence {
        iterations: usize,
        reason: String,
        last_iterate: Vec<f64>,
    },

    #[error("singular Hessian: {0}; try fewer covariates or check for separation")]
    SingularHessian(String),

    #[error("degenerate column {column}: {reason}")]
    DegenerateColumn { column: usize, reason: String },

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularHessian(_)
                | Error::DegenerateColumn { .. }
                | Error::Degenerate(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::NonConvergence { .. } => "non_convergence",
            Error::SingularHessian(_) => "singular_hessian",
            Error::DegenerateColumn { .. } => "degenerate_column",
            Error::Degenerate(_) => "degenerate",
        }
    }
}
