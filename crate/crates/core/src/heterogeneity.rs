//! Subject-level random-effects posterior: log density, derivatives, Newton
//! mode finding, the Gaussian (Laplace) approximation, and conditioning of
//! `(b^Y, b^M)` on a fixed treatment random effect `b^A = c`.
//!
//! All vectors here live in the *active* coordinates of [`ReffLayout`]: the
//! treatment block is dropped entirely when `v = 0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, bernoulli_logit_ll, sigmoid};
use crate::model::design::{fill_rows, HistoryView};
use crate::model::{Channel, ModelSpec, ParamsDraw, ReffLayout};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_NEWTON_ITERS: usize = 100;

/// A history truncated for posterior updating: outcome and confounder
/// information through interval `t`, treatment information through `h`.
#[derive(Clone, Copy, Debug)]
pub struct HistorySlice<'a> {
    pub view: HistoryView<'a>,
    pub t: usize,
    pub h: usize,
}

/// `N(0, G)` prior over the active random-effect coordinates.
#[derive(Clone, Debug)]
pub struct ReffPrior {
    pub g: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl ReffPrior {
    /// Fails when `g` is singular.
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if g.nrows() == 0 {
            return Ok(Self { precision: DMatrix::zeros(0, 0), g, chol: None });
        }
        let chol = linalg::cholesky(&g).map_err(|_| Error::Matrix("random-effect covariance G is singular".into()))?;
        let precision = linalg::symmetrize(&chol.inverse());
        Ok(Self { g, precision, chol: Some(chol) })
    }

    pub fn from_params(params: &ParamsDraw, spec: &ModelSpec) -> Result<Self> {
        Self::new(params.active_g(spec))
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `b' G^{-1} b`.
    pub fn quad(&self, b: &DVector<f64>) -> f64 {
        match &self.chol {
            None => 0.0,
            Some(c) => {
                let w = c.l().solve_lower_triangular(b).expect("triangular solve");
                w.norm_squared()
            }
        }
    }

    pub fn log_det(&self) -> f64 {
        self.chol.as_ref().map_or(0.0, |c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }
}

#[derive(Clone, Debug)]
struct GaussTerm {
    interval: usize,
    y: f64,
    offset: f64,
}

#[derive(Clone, Debug)]
struct BernTerm {
    interval: usize,
    outcome: bool,
    offset: f64,
}

/// Likelihood contributions of one subject with fixed-effect parts folded
/// into offsets. Random-effect design rows are stored flat per channel.
#[derive(Clone, Debug)]
pub struct SubjectTerms {
    pub layout: ReffLayout,
    pub sigma: f64,
    gauss: Vec<GaussTerm>,
    gauss_z: Vec<f64>,
    conf: Vec<BernTerm>,
    conf_z: Vec<f64>,
    treat: Vec<BernTerm>,
    treat_z: Vec<f64>,
}

impl SubjectTerms {
    pub fn new(layout: ReffLayout, sigma: f64) -> Self {
        Self {
            layout,
            sigma,
            gauss: Vec::new(),
            gauss_z: Vec::new(),
            conf: Vec::new(),
            conf_z: Vec::new(),
            treat: Vec::new(),
            treat_z: Vec::new(),
        }
    }

    fn treat_stride(&self) -> usize {
        usize::from(self.layout.treatment_active)
    }

    pub fn push_outcome(&mut self, interval: usize, y: f64, offset: f64, z: &[f64]) {
        debug_assert_eq!(z.len(), self.layout.q_outcome);
        self.gauss.push(GaussTerm { interval, y, offset });
        self.gauss_z.extend_from_slice(z);
    }

    pub fn push_confounder(&mut self, interval: usize, outcome: bool, offset: f64, z: &[f64]) {
        debug_assert_eq!(z.len(), self.layout.q_confounder);
        self.conf.push(BernTerm { interval, outcome, offset });
        self.conf_z.extend_from_slice(z);
    }

    /// `z` is the scalar treatment design value; ignored when the block is inactive.
    pub fn push_treatment(&mut self, interval: usize, outcome: bool, offset: f64, z: f64) {
        self.treat.push(BernTerm { interval, outcome, offset });
        if self.layout.treatment_active {
            self.treat_z.push(z);
        }
    }

    pub fn n_terms(&self) -> usize {
        self.gauss.len() + self.conf.len() + self.treat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_terms() == 0
    }

    /// Collects the terms for `history` under `params`.
    pub fn from_history(history: &HistorySlice<'_>, params: &ParamsDraw, spec: &ModelSpec) -> Result<Self> {
        let view = &history.view;
        let layout = spec.layout();
        let mut terms = SubjectTerms::new(layout, params.sigma);
        if history.t >= view.y.len() || history.t >= view.m.len() {
            return Err(Error::Data(format!("history shorter than outcome horizon {}", history.t)));
        }
        if history.h >= view.a.len() {
            return Err(Error::Data(format!("history shorter than treatment horizon {}", history.h)));
        }
        let mut x = Vec::new();
        let mut z = Vec::new();
        for j in 1..=history.t {
            let observed = !spec.confounder_enabled || view.m[j];
            if let (Some(y), true) = (view.y[j], observed) {
                fill_rows(spec, Channel::Outcome, view, j, &mut x, &mut z)?;
                terms.push_outcome(j, y, linalg::dot(&x, &params.beta_y), &z);
            }
            if spec.confounder_enabled {
                fill_rows(spec, Channel::Confounder, view, j, &mut x, &mut z)?;
                terms.push_confounder(j, view.m[j], linalg::dot(&x, &params.beta_m), &z);
            }
        }
        if spec.treatment_modeled() {
            let upto = treatment_upto(view.a, history.h);
            for j in 1..=upto {
                fill_rows(spec, Channel::Treatment, view, j, &mut x, &mut z)?;
                terms.push_treatment(j, view.a[j], linalg::dot(&x, &params.beta_a), z.first().copied().unwrap_or(0.0));
            }
        }
        Ok(terms)
    }

    /// Log-likelihood of the stored terms at `b` (full normalizing constants
    /// for the Gaussian terms). Reports the first non-finite term.
    pub fn log_lik(&self, b: &[f64]) -> std::result::Result<f64, usize> {
        let l = &self.layout;
        let by = &b[l.outcome_range()];
        let bm = &b[l.confounder_range()];
        let ba = l.active_treatment_index().map_or(0.0, |i| b[i]);
        let mut ll = 0.0;
        if !self.gauss.is_empty() {
            let s2 = self.sigma * self.sigma;
            let c = -0.5 * (LN_2PI + s2.ln());
            for (k, term) in self.gauss.iter().enumerate() {
                let z = &self.gauss_z[k * l.q_outcome..(k + 1) * l.q_outcome];
                let r = term.y - term.offset - linalg::dot(z, by);
                let v = c - 0.5 * r * r / s2;
                if !v.is_finite() {
                    return Err(term.interval);
                }
                ll += v;
            }
        }
        for (k, term) in self.conf.iter().enumerate() {
            let z = &self.conf_z[k * l.q_confounder..(k + 1) * l.q_confounder];
            let v = bernoulli_logit_ll(term.outcome, term.offset + linalg::dot(z, bm));
            if !v.is_finite() {
                return Err(term.interval);
            }
            ll += v;
        }
        let ts = self.treat_stride();
        for (k, term) in self.treat.iter().enumerate() {
            let eta = term.offset + if ts == 1 { self.treat_z[k] * ba } else { 0.0 };
            let v = bernoulli_logit_ll(term.outcome, eta);
            if !v.is_finite() {
                return Err(term.interval);
            }
            ll += v;
        }
        Ok(ll)
    }

    /// Score of the log-likelihood and its negative Hessian (data curvature).
    pub fn score_and_curvature(&self, b: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let l = &self.layout;
        let k = l.active_dim();
        let mut g = DVector::zeros(k);
        let mut d = DMatrix::zeros(k, k);
        let yr = l.outcome_range();
        let mr = l.confounder_range();
        if !self.gauss.is_empty() && l.q_outcome > 0 {
            let s2 = self.sigma * self.sigma;
            let by = &b[yr.clone()];
            for (n, term) in self.gauss.iter().enumerate() {
                let z = &self.gauss_z[n * l.q_outcome..(n + 1) * l.q_outcome];
                let r = term.y - term.offset - linalg::dot(z, by);
                for (i, zi) in z.iter().enumerate() {
                    g[yr.start + i] += r * zi / s2;
                    for (j, zj) in z.iter().enumerate() {
                        d[(yr.start + i, yr.start + j)] += zi * zj / s2;
                    }
                }
            }
        }
        if l.q_confounder > 0 {
            let bm = &b[mr.clone()];
            for (n, term) in self.conf.iter().enumerate() {
                let z = &self.conf_z[n * l.q_confounder..(n + 1) * l.q_confounder];
                let p = sigmoid(term.offset + linalg::dot(z, bm));
                let w = p * (1.0 - p);
                let resid = f64::from(u8::from(term.outcome)) - p;
                for (i, zi) in z.iter().enumerate() {
                    g[mr.start + i] += resid * zi;
                    for (j, zj) in z.iter().enumerate() {
                        d[(mr.start + i, mr.start + j)] += w * zi * zj;
                    }
                }
            }
        }
        if let Some(ia) = l.active_treatment_index() {
            let ba = b[ia];
            for (n, term) in self.treat.iter().enumerate() {
                let z = self.treat_z[n];
                let p = sigmoid(term.offset + z * ba);
                g[ia] += (f64::from(u8::from(term.outcome)) - p) * z;
                d[(ia, ia)] += p * (1.0 - p) * z * z;
            }
        }
        (g, d)
    }
}

/// Last treatment interval contributing to the likelihood: `min(h, s_i)`,
/// or 0 when treated at baseline.
pub fn treatment_upto(a: &[bool], h: usize) -> usize {
    match a[..=h].iter().position(|&x| x) {
        Some(s) => s,
        None => h,
    }
}

/// Posterior of one subject's random effects given its history and the
/// population parameters.
#[derive(Clone, Debug)]
pub struct SubjectPosterior<'p> {
    pub terms: SubjectTerms,
    pub prior: &'p ReffPrior,
}

/// Gaussian approximation of the random-effects posterior at its mode.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceSummary {
    pub layout: ReffLayout,
    pub mode: DVector<f64>,
    /// Inverse observed information at the mode.
    pub cov: DMatrix<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// `(b^Y, b^M) | b^A = c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl<'p> SubjectPosterior<'p> {
    pub fn new(terms: SubjectTerms, prior: &'p ReffPrior) -> Self {
        debug_assert_eq!(terms.layout.active_dim(), prior.dim());
        Self { terms, prior }
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn check_dim(&self, b: &DVector<f64>) -> Result<()> {
        if b.len() != self.dim() {
            return Err(Error::Spec(format!("random-effect vector has length {}, expected {}", b.len(), self.dim())));
        }
        Ok(())
    }

    /// `-1/2 b'G^{-1}b + log-likelihood`.
    pub fn log_post(&self, b: &DVector<f64>) -> Result<f64> {
        self.check_dim(b)?;
        let ll = self.terms.log_lik(b.as_slice()).map_err(|interval| Error::NonFinite {
            what: "log posterior",
            subject: String::new(),
            interval,
        })?;
        Ok(-0.5 * self.prior.quad(b) + ll)
    }

    pub fn grad(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(b)?;
        let (s, _) = self.terms.score_and_curvature(b.as_slice());
        Ok(s - &self.prior.precision * b)
    }

    pub fn hess(&self, b: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(b)?;
        let (_, d) = self.terms.score_and_curvature(b.as_slice());
        Ok(-(&self.prior.precision + d))
    }

    /// Newton iteration from `b = 0` with backtracking and an additive ridge
    /// when the curvature is not positive definite.
    pub fn laplace(&self) -> Result<LaplaceSummary> {
        let k = self.dim();
        let layout = self.terms.layout;
        if k == 0 {
            return Ok(LaplaceSummary {
                layout,
                mode: DVector::zeros(0),
                cov: DMatrix::zeros(0, 0),
                iterations: 0,
                grad_norm: 0.0,
            });
        }
        let tol = 1e-8 * (1.0 + self.terms.n_terms() as f64);
        let mut b = DVector::zeros(k);
        let mut lp = self.log_post(&b)?;
        let mut ridge = 0.0f64;
        let mut iterations = 0;
        let mut grad_norm = f64::INFINITY;
        let mut curvature = DMatrix::zeros(k, k);
        while iterations < MAX_NEWTON_ITERS {
            let (score, d) = self.terms.score_and_curvature(b.as_slice());
            let grad = score - &self.prior.precision * &b;
            grad_norm = grad.amax();
            curvature = d;
            if grad_norm <= tol {
                break;
            }
            iterations += 1;
            let info = &self.prior.precision + &curvature;
            let mut accepted = false;
            for _ in 0..20 {
                let damped = &info + DMatrix::identity(k, k) * ridge;
                let Some(ch) = damped.cholesky() else {
                    ridge = (ridge * 10.0).max(1e-8 * (1.0 + info.amax()));
                    continue;
                };
                let step = ch.solve(&grad);
                let slope = grad.dot(&step);
                let mut alpha = 1.0;
                for _ in 0..40 {
                    let cand = &b + &step * alpha;
                    let lp_c = self.log_post(&cand)?;
                    if lp_c >= lp + 1e-4 * alpha * slope || (lp_c - lp).abs() <= 1e-15 * lp.abs() {
                        b = cand;
                        lp = lp_c;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    ridge *= 0.1;
                    if ridge < 1e-12 {
                        ridge = 0.0;
                    }
                    break;
                }
                ridge = (ridge * 10.0).max(1e-8 * (1.0 + info.amax()));
            }
            if !accepted {
                return Err(Error::LaplaceFailure { iterations, grad_norm });
            }
        }
        if grad_norm > tol {
            return Err(Error::LaplaceFailure { iterations, grad_norm });
        }
        // V = (G^{-1} + D)^{-1} = G (I + D G)^{-1}
        let g = &self.prior.g;
        let m = DMatrix::identity(k, k) + &curvature * g;
        let vt = m
            .transpose()
            .lu()
            .solve(g)
            .ok_or_else(|| Error::Matrix("observed information is singular".into()))?;
        let cov = linalg::symmetrize(&vt.transpose());
        if cov.clone().cholesky().is_none() {
            return Err(Error::Matrix("Laplace covariance is not positive definite".into()));
        }
        Ok(LaplaceSummary { layout, mode: b, cov, iterations, grad_norm })
    }
}

impl LaplaceSummary {
    /// Marginal of the `(b^Y, b^M)` block.
    pub fn dynamic_marginal(&self) -> ConditionalGaussian {
        let k = self.layout.dynamic_dim();
        ConditionalGaussian {
            mean: self.mode.rows(0, k).into_owned(),
            cov: self.cov.view((0, 0), (k, k)).into_owned(),
        }
    }

    /// Mean and variance of the `b^A` marginal, if the block is active.
    pub fn treatment_marginal(&self) -> Option<(f64, f64)> {
        self.layout.active_treatment_index().map(|i| (self.mode[i], self.cov[(i, i)]))
    }
}

/// Gaussian conditioning of `(b^Y, b^M)` on `b^A = c`.
pub fn condition_on_ba(summary: &LaplaceSummary, c: f64) -> Result<ConditionalGaussian> {
    let ia = summary
        .layout
        .active_treatment_index()
        .ok_or_else(|| Error::Spec("no active treatment random effect to condition on".into()))?;
    let va = summary.cov[(ia, ia)];
    if !(va > 0.0) {
        return Err(Error::Matrix(format!("treatment random-effect variance {va} is not positive")));
    }
    let k = summary.layout.dynamic_dim();
    let cross = summary.cov.view((0, ia), (k, 1)).into_owned();
    let shift = c - summary.mode[ia];
    let mean = summary.mode.rows(0, k).into_owned() + &cross * (shift / va);
    let cov = summary.cov.view((0, 0), (k, k)).into_owned() - &cross * cross.transpose() / va;
    let cov = linalg::clamp_psd(&linalg::symmetrize(&cov))?;
    Ok(ConditionalGaussian { mean: DVector::from_column_slice(mean.as_slice()), cov })
}

impl ConditionalGaussian {
    /// `mean + L z` with `L L' = cov`.
    pub fn draw_with(&self, normals: &[f64]) -> Result<DVector<f64>> {
        let l = linalg::psd_sqrt(&self.cov)?;
        Ok(&self.mean + l * DVector::from_column_slice(&normals[..self.mean.len()]))
    }
}

fn posterior_for<'p>(history: &HistorySlice<'_>, params: &ParamsDraw, spec: &ModelSpec, prior: &'p ReffPrior) -> Result<SubjectPosterior<'p>> {
    Ok(SubjectPosterior::new(SubjectTerms::from_history(history, params, spec)?, prior))
}

/// Log posterior of `b` (active coordinates) up to the prior's normalizing constant.
pub fn log_post_b(b: &[f64], history: &HistorySlice<'_>, params: &ParamsDraw, spec: &ModelSpec) -> Result<f64> {
    let prior = ReffPrior::from_params(params, spec)?;
    posterior_for(history, params, spec, &prior)?.log_post(&DVector::from_column_slice(b))
}

pub fn grad_log_post_b(b: &[f64], history: &HistorySlice<'_>, params: &ParamsDraw, spec: &ModelSpec) -> Result<DVector<f64>> {
    let prior = ReffPrior::from_params(params, spec)?;
    posterior_for(history, params, spec, &prior)?.grad(&DVector::from_column_slice(b))
}

pub fn hess_log_post_b(b: &[f64], history: &HistorySlice<'_>, params: &ParamsDraw, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let prior = ReffPrior::from_params(params, spec)?;
    posterior_for(history, params, spec, &prior)?.hess(&DVector::from_column_slice(b))
}

pub fn laplace_approx(history: &HistorySlice<'_>, params: &ParamsDraw, spec: &ModelSpec) -> Result<LaplaceSummary> {
    let prior = ReffPrior::from_params(params, spec)?;
    posterior_for(history, params, spec, &prior)?.laplace()
}

/// Draws the treatment random effect for a subject conditioned at `h`
/// (`history.h`; outcome information is taken through the same interval).
///
/// `h = 0` draws from the `N(0, v)` prior; otherwise from the `b^A` marginal of
/// the Laplace approximation. `v = 0` returns exactly 0. A Laplace failure
/// falls back to the prior with a logged warning.
pub fn sample_ba_given_history<R: Rng + ?Sized>(
    view: &HistoryView<'_>,
    h: usize,
    params: &ParamsDraw,
    spec: &ModelSpec,
    prior: &ReffPrior,
    rng: &mut R,
) -> Result<f64> {
    let v = spec.v;
    if v == 0.0 || spec.layout().active_treatment_index().is_none() {
        return Ok(0.0);
    }
    let z: f64 = rng.sample(StandardNormal);
    if h == 0 {
        return Ok(v.sqrt() * z);
    }
    let history = HistorySlice { view: *view, t: h, h };
    let summary = SubjectTerms::from_history(&history, params, spec)
        .and_then(|terms| SubjectPosterior::new(terms, prior).laplace());
    match summary {
        Ok(s) => {
            let (m, var) = s.treatment_marginal().expect("treatment block active");
            Ok(m + var.sqrt() * z)
        }
        Err(e) => {
            log::warn!("laplace approximation failed while drawing b^A ({e}); using the N(0, v) prior");
            Ok(v.sqrt() * z)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureTerm;

    fn spec_with_confounder(v: f64) -> ModelSpec {
        let mut spec = ModelSpec::simulation_study(v);
        spec.confounder_enabled = true;
        spec.confounder_features = vec![FeatureTerm::Intercept, FeatureTerm::Time];
        spec.confounder_reff_design = vec![FeatureTerm::Intercept];
        spec.outcome_features.push(FeatureTerm::LaggedConfounder);
        spec.validate().unwrap();
        spec
    }

    fn params(spec: &ModelSpec) -> ParamsDraw {
        let mut p = ParamsDraw::zeros(spec, 0.7);
        p.beta_y = vec![0.3, -0.2, 0.1, 0.4, 0.8, 0.3, 0.2];
        p.beta_m = vec![1.0, -0.1];
        p.beta_a = vec![-0.5, 0.2, -0.3, 0.1];
        let g = [0.5, 0.1, 0.15, 0.1, 0.4, -0.1, 0.15, -0.1, spec.v];
        p.g = DMatrix::from_row_slice(3, 3, &g);
        p
    }

    #[test]
    fn prior_only_history_returns_prior() {
        let spec = spec_with_confounder(0.6);
        let p = params(&spec);
        let view = HistoryView { baseline: &[1.0], y: &[Some(0.2)], m: &[true], a: &[false] };
        let hist = HistorySlice { view, t: 0, h: 0 };
        let s = laplace_approx(&hist, &p, &spec).unwrap();
        assert_eq!(s.mode, DVector::zeros(3));
        assert_eq!(s.cov, p.g);
        let b = [0.3, -0.2, 0.5];
        let diff = log_post_b(&b, &hist, &p, &spec).unwrap() - log_post_b(&[0.0; 3], &hist, &p, &spec).unwrap();
        let q = DVector::from_column_slice(&b);
        let expect = -0.5 * (q.transpose() * linalg::spd_inverse(&p.g).unwrap() * &q)[0];
        assert!((diff - expect).abs() < 1e-12);
        let g0 = grad_log_post_b(&[0.0; 3], &hist, &p, &spec).unwrap();
        assert_eq!(g0, DVector::zeros(3));
    }

    #[test]
    fn two_by_two_conditioning_by_hand() {
        let layout = ReffLayout { q_outcome: 1, q_confounder: 0, q_treatment: 1, treatment_active: true };
        let s = LaplaceSummary {
            layout,
            mode: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
            iterations: 0,
            grad_norm: 0.0,
        };
        let c = condition_on_ba(&s, 1.0).unwrap();
        assert!((c.mean[0] - 0.5).abs() < 1e-15);
        assert!((c.cov[(0, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn conditioning_requires_positive_treatment_variance() {
        let layout = ReffLayout { q_outcome: 1, q_confounder: 0, q_treatment: 1, treatment_active: true };
        let s = LaplaceSummary {
            layout,
            mode: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            iterations: 0,
            grad_norm: 0.0,
        };
        assert!(condition_on_ba(&s, 1.0).is_err());
    }

    #[test]
    fn treatment_terms_stop_at_initiation() {
        assert_eq!(treatment_upto(&[false, false, true, true], 3), 2);
        assert_eq!(treatment_upto(&[false, false, false], 2), 2);
        assert_eq!(treatment_upto(&[true, true], 1), 0);
        assert_eq!(treatment_upto(&[false, false, true], 1), 1);
    }

    #[test]
    fn singular_g_is_an_error() {
        let spec = ModelSpec::simulation_study(0.0);
        let p = ParamsDraw::zeros(&spec, 1.0);
        let view = HistoryView { baseline: &[1.0], y: &[Some(0.2), Some(0.1)], m: &[true; 2], a: &[false; 2] };
        let hist = HistorySlice { view, t: 1, h: 1 };
        assert!(matches!(log_post_b(&[0.0], &hist, &p, &spec), Err(Error::Matrix(_))));
    }

    #[test]
    fn zero_v_draw_is_exactly_zero() {
        let spec = ModelSpec::simulation_study(0.0);
        let mut p = ParamsDraw::zeros(&spec, 1.0);
        p.g[(0, 0)] = 1.0;
        let prior = ReffPrior::from_params(&p, &spec).unwrap();
        let view = HistoryView { baseline: &[1.0], y: &[Some(0.2), Some(0.1)], m: &[true; 2], a: &[false; 2] };
        let mut rng = crate::rng::stream(1, &[]);
        for h in 0..2 {
            assert_eq!(sample_ba_given_history(&view, h, &p, &spec, &prior, &mut rng).unwrap(), 0.0);
        }
    }
}
