use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("drift matrix is unstable (spectral abscissa {abscissa:e})")]
    Unstable { abscissa: f64 },

    #[error("drift matrix is marginally stable (spectral abscissa {abscissa:e} within tolerance of zero)")]
    Marginal { abscissa: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("configuration set is rank deficient; missing: {}", missing.join(", "))]
    RankDeficient { missing: Vec<String> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable code used in sweep tables.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation { .. } => "INVALID",
            Error::Unstable { .. } => "UNSTABLE",
            Error::Marginal { .. } => "MARGINAL",
            Error::Numerical(_) => "NUMERICAL",
            Error::Domain(_) => "DOMAIN",
            Error::StepSize(_) => "STEP_SIZE",
            Error::InsufficientSamples(_) => "SAMPLES",
            Error::RankDeficient { .. } => "RANK",
            Error::Parse(_) => "PARSE",
            Error::Io { .. } => "IO",
        }
    }
}
