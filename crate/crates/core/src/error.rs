use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// The model specification is inconsistent or references something unavailable.
    #[error("spec error: {0}")]
    Spec(String),

    /// A simulation or study configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// The dataset does not satisfy a structural requirement.
    #[error("data error: {0}")]
    Data(String),

    /// Posterior sampling could not start or proceed.
    #[error("fit error: {0}")]
    Fit(String),

    /// A likelihood or posterior evaluation produced a non-finite value.
    #[error("non-finite {what} for subject {subject} at interval {interval}")]
    NonFinite {
        what: &'static str,
        subject: String,
        interval: usize,
    },

    /// A covariance matrix that must be positive (semi)definite is not.
    #[error("matrix error: {0}")]
    Matrix(String),

    /// Newton iterations for the random-effects mode did not converge.
    #[error("laplace approximation failed after {iterations} iterations (grad norm {grad_norm:e})")]
    LaplaceFailure { iterations: usize, grad_norm: f64 },

    /// Counterfactual projection failed for a specific subject, interval and draw.
    #[error("trajectory error for subject {subject} at interval {interval}, draw {draw}: {source}")]
    Trajectory {
        subject: String,
        interval: usize,
        draw: usize,
        #[source]
        source: Box<Error>,
    },

    /// A contrast request is malformed.
    #[error("request error: {0}")]
    Request(String),

    /// A value outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
