//! Bayesian g-computation for dynamic treatment regimes with a multivariate
//! generalized linear mixed model linking outcome, time-varying confounder
//! and treatment assignment through correlated subject-level random effects.
//!
//! The variance `v` of the treatment random effect is not identifiable from
//! monotone treatment data; it is supplied by the analyst and acts as the
//! sensitivity parameter for time-invariant unmeasured confounding.

pub mod error;
pub mod gcomputation;
pub mod heterogeneity;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod simulator;
pub mod study;

pub use error::{Error, Result};

/// Version of this library, recorded in every output manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
