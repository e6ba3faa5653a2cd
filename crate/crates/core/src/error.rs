use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular design: pivot {pivot:.3e} at column {column} is below the floor {floor:.3e}")]
    SingularDesign { column: usize, pivot: f64, floor: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("negative input to the repulsion function: {0}")]
    NegativeInput(f64),

    #[error("monte carlo estimate underflow: {zero_draws} of {n_samples} draws evaluated to zero")]
    EstimateUnderflow { zero_draws: usize, n_samples: usize },

    #[error("V_n({t}) series did not converge within {terms} terms")]
    VnNonConvergence { t: usize, terms: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) | Error::SingularDesign { .. } | Error::Data(_) => "data",
            Error::Csv(_) => "data",
            Error::InvalidConfig(_) | Error::NegativeInput(_) => "config",
            Error::Json(_) => "config",
            Error::EstimateUnderflow { .. } => "underflow",
            Error::VnNonConvergence { .. } => "numeric",
            Error::InvalidState(_) => "state",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
