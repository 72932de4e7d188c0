//! Posterior sampling of the joint model by a blocked Metropolis-within-Gibbs
//! sweep, with the treatment random-effect variance held at `v`.

pub mod covariance;
pub mod draws;
pub mod glm;
pub mod prepared;
mod sampler;

pub use covariance::CovarianceParam;
pub use draws::{column_names, effective_sample_size, DrawsManifest, McmcConfig, PosteriorDraws};
pub use prepared::{prepare, ChannelRows, PreparedSubject};
pub use sampler::{beta_y_conditional, fit_mglmm};

use crate::error::{Error, Result};
use crate::heterogeneity::{HistorySlice, SubjectTerms};
use crate::model::{LongDataset, ModelSpec, ParamsDraw};

/// Log joint likelihood of the data given population parameters and each
/// subject's random effects (active coordinates, in dataset order).
pub fn loglik_joint(data: &LongDataset, spec: &ModelSpec, params: &ParamsDraw, reffects: &[Vec<f64>]) -> Result<f64> {
    params.validate(spec)?;
    if reffects.len() != data.subjects.len() {
        return Err(Error::Spec(format!(
            "{} random-effect vectors for {} subjects",
            reffects.len(),
            data.subjects.len()
        )));
    }
    let k = spec.layout().active_dim();
    let mut total = 0.0;
    for (s, b) in data.subjects.iter().zip(reffects) {
        if b.len() != k {
            return Err(Error::Spec(format!("subject {}: random effect has length {}, expected {k}", s.id, b.len())));
        }
        let t = s.n_intervals();
        let history = HistorySlice { view: s.view(), t, h: t };
        let terms = SubjectTerms::from_history(&history, params, spec)?;
        total += terms.log_lik(b).map_err(|interval| Error::NonFinite {
            what: "log likelihood",
            subject: s.id.clone(),
            interval,
        })?;
    }
    Ok(total)
}
