use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum BnseError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix `{what}` is not positive definite even with jitter {jitter:.3e}")]
    NotPositiveDefinite { what: String, jitter: f64 },

    #[error("negative posterior variance {value:.6e} at frequency {xi} (prior variance {prior:.6e})")]
    NegativeVariance { xi: f64, value: f64, prior: f64 },

    #[error("objective returned a non-finite value {value} at {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("samples are not uniformly spaced (max relative deviation {deviation:.3e}); use Lomb-Scargle for uneven sampling")]
    NonUniform { deviation: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BnseError> = std::result::Result<T, E>;

impl BnseError {
    /// True for failures of the numerics, as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BnseError::NotPositiveDefinite { .. }
                | BnseError::NegativeVariance { .. }
                | BnseError::NonFinite { .. }
                | BnseError::Eigen(_)
        )
    }
}
