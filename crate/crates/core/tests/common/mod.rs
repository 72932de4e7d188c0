#![allow(dead_code)]

use gcomp_core::inference::CovarianceParam;
use gcomp_core::model::{FeatureTerm, ModelSpec, ParamsDraw};
use nalgebra::DMatrix;
use rand::Rng;

/// Outcome, confounder and treatment channels with one random effect each.
pub fn three_channel_spec(v: f64) -> ModelSpec {
    let mut spec = ModelSpec::simulation_study(v);
    spec.confounder_enabled = true;
    spec.confounder_features = vec![FeatureTerm::Intercept, FeatureTerm::Time, FeatureTerm::LaggedOutcome { fill: 0.0 }];
    spec.confounder_reff_design = vec![FeatureTerm::Intercept];
    spec.outcome_features.push(FeatureTerm::LaggedConfounder);
    spec.validate().unwrap();
    spec
}

/// Random coefficients and a random covariance with `G[a,a] = v`.
pub fn random_params<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ParamsDraw {
    let mut p = ParamsDraw::zeros(spec, rng.random_range(0.3..1.0));
    for b in p.beta_y.iter_mut().chain(&mut p.beta_m).chain(&mut p.beta_a) {
        *b = rng.random_range(-0.6..0.6);
    }
    let layout = spec.layout();
    let k = layout.full_dim();
    let pinned = layout.treatment_index().filter(|_| spec.v > 0.0);
    let dim = if pinned.is_some() { k } else { layout.dynamic_dim() };
    let param = CovarianceParam::new(dim, pinned.map(|i| (i, spec.v)));
    let theta: Vec<f64> = (0..param.n_params()).map(|_| rng.random_range(-0.8..0.5)).collect();
    let g = param.matrix(&theta);
    let mut full = DMatrix::zeros(k, k);
    full.view_mut((0, 0), (dim, dim)).copy_from(&g);
    if let (Some(i), None) = (layout.treatment_index(), pinned) {
        full[(i, i)] = spec.v;
    }
    p.g = full;
    p.validate(spec).unwrap();
    p
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
