use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::covariance::CovarianceParam;
use super::draws::{column_names, effective_sample_size, flatten, McmcConfig, PosteriorDraws};
use super::glm;
use super::prepared::{prepare, PreparedSubject};
use crate::error::{Error, Result};
use crate::heterogeneity::{ReffPrior, SubjectPosterior};
use crate::linalg::{self, bernoulli_logit_ll};
use crate::model::{validate_dataset, LongDataset, ModelSpec, ParamsDraw, ReffLayout};
use crate::rng::{self, channel};

const BLOCK_BETA_Y: u64 = 1;
const BLOCK_SIGMA: u64 = 2;
const BLOCK_BETA_M: u64 = 3;
const BLOCK_BETA_A: u64 = 4;
const BLOCK_REFF: u64 = 5;
const BLOCK_G: u64 = 6;
const BLOCK_G_WHITENED: u64 = 7;
const BLOCK_OUTCOME_COLLAPSED: u64 = 8;
const LAPLACE_FAILURES_BEFORE_RW: usize = 3;
const INITIAL_SD: f64 = 0.5;

/// Metropolis block with Robbins-Monro scaling during warmup.
#[derive(Clone, Debug)]
struct Adaptive {
    log_scale: f64,
    target: f64,
    accepted: u64,
    proposed: u64,
}

impl Adaptive {
    fn new(scale: f64, target: f64) -> Self {
        Self { log_scale: scale.ln(), target, accepted: 0, proposed: 0 }
    }

    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Returns whether to accept, given the log acceptance ratio and a uniform.
    fn step(&mut self, log_ratio: f64, u: f64, iter: usize, warmup: bool) -> bool {
        let alpha = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let accept = u < alpha;
        if warmup {
            let gamma = (iter as f64 + 1.0).powf(-0.6);
            self.log_scale = (self.log_scale + gamma * (alpha - self.target)).clamp(-12.0, 5.0);
        } else {
            self.proposed += 1;
            self.accepted += u64::from(accept);
        }
        accept
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Full conditional of the outcome coefficients, `N(mean, cov)`, given the
/// random effects (active coordinates), `sigma`, and a `N(0, prior_sd^2)` prior.
pub fn beta_y_conditional(
    prep: &[PreparedSubject],
    b: &[DVector<f64>],
    sigma: f64,
    prior_sd: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = prep.first().map_or(0, |s| s.outcome.p);
    let s2 = sigma * sigma;
    let mut prec = DMatrix::identity(p, p) / (prior_sd * prior_sd);
    let mut rhs = DVector::zeros(p);
    for (s, bi) in prep.iter().zip(b) {
        let o = &s.outcome;
        for r in 0..o.len() {
            let x = o.x_row(r);
            let resid = o.response[r] - linalg::dot(o.z_row(r), &bi.as_slice()[..o.q]);
            for i in 0..p {
                rhs[i] += x[i] * resid / s2;
                for j in 0..p {
                    prec[(i, j)] += x[i] * x[j] / s2;
                }
            }
        }
    }
    let cov = linalg::spd_inverse(&prec)?;
    let mean = &cov * rhs;
    Ok((mean, cov))
}

struct Chain<'a> {
    spec: &'a ModelSpec,
    prep: &'a [PreparedSubject],
    layout: ReffLayout,
    cov: CovarianceParam,
    cfg: &'a McmcConfig,
    beta_y: Vec<f64>,
    sigma: f64,
    beta_m: Vec<f64>,
    beta_a: Vec<f64>,
    theta: Vec<f64>,
    b: Vec<DVector<f64>>,
    failures: Vec<usize>,
    chol_m: DMatrix<f64>,
    chol_a: DMatrix<f64>,
    ada_sigma: Adaptive,
    ada_m: Adaptive,
    ada_a: Adaptive,
    ada_g: Vec<Adaptive>,
    ada_gw: Vec<Adaptive>,
    history_m: Vec<Vec<f64>>,
    history_a: Vec<Vec<f64>>,
    b_accepted: u64,
    b_proposed: u64,
    b_fallbacks: u64,
}

impl<'a> Chain<'a> {
    fn new(spec: &'a ModelSpec, prep: &'a [PreparedSubject], cfg: &'a McmcConfig) -> Result<Self> {
        let layout = spec.layout();
        let priors = &spec.priors;
        let fy = glm::linear(prep.iter().map(|s| &s.outcome), priors.coef_sd)?;
        let fm = if spec.confounder_enabled {
            Some(glm::logistic(prep.iter().map(|s| &s.confounder), priors.coef_sd, "confounder")?)
        } else {
            None
        };
        let fa = if spec.treatment_modeled() {
            Some(glm::logistic(prep.iter().map(|s| &s.treatment), priors.coef_sd, "treatment")?)
        } else {
            None
        };
        let k = layout.active_dim();
        let pinned = layout.active_treatment_index().map(|i| (i, spec.v));
        let cov = CovarianceParam::new(k, pinned);
        let theta = cov.initial(INITIAL_SD);
        let chol_of = |f: &Option<glm::GlmFit>| -> Result<DMatrix<f64>> {
            match f {
                Some(f) => Ok(linalg::psd_sqrt(&f.cov)?),
                None => Ok(DMatrix::zeros(0, 0)),
            }
        };
        let vec_scale = |p: usize| 2.38 / (p.max(1) as f64).sqrt();
        Ok(Self {
            spec,
            prep,
            layout,
            cfg,
            beta_y: fy.coef,
            sigma: fy.scale,
            beta_m: fm.as_ref().map_or_else(Vec::new, |f| f.coef.clone()),
            beta_a: fa.as_ref().map_or_else(Vec::new, |f| f.coef.clone()),
            chol_m: chol_of(&fm)?,
            chol_a: chol_of(&fa)?,
            ada_sigma: Adaptive::new(0.1, cfg.target_scalar),
            ada_m: Adaptive::new(vec_scale(spec.confounder_features.len()), cfg.target_vector),
            ada_a: Adaptive::new(vec_scale(spec.treatment_features.len()), cfg.target_vector),
            ada_g: vec![Adaptive::new(0.1, cfg.target_scalar); cov.n_params()],
            ada_gw: vec![Adaptive::new(0.1, cfg.target_scalar); cov.n_params()],
            history_m: Vec::new(),
            history_a: Vec::new(),
            theta,
            cov,
            b: vec![DVector::zeros(k); prep.len()],
            failures: vec![0; prep.len()],
            b_accepted: 0,
            b_proposed: 0,
            b_fallbacks: 0,
        })
    }

    fn block_rng(&self, iter: usize, block: u64) -> ChaCha8Rng {
        rng::stream(self.cfg.seed, &[channel::SAMPLER, iter as u64, block])
    }

    fn terms(&self, s: &PreparedSubject) -> crate::heterogeneity::SubjectTerms {
        s.terms(self.spec, &self.beta_y, self.sigma, &self.beta_m, &self.beta_a)
    }

    /// Checks that every likelihood term is finite at the starting values.
    fn check_initial(&self) -> Result<()> {
        for (s, b) in self.prep.iter().zip(&self.b) {
            self.terms(s).log_lik(b.as_slice()).map_err(|interval| Error::NonFinite {
                what: "log likelihood at initialization",
                subject: s.id.clone(),
                interval,
            })?;
        }
        Ok(())
    }

    fn update_beta_y(&mut self, iter: usize) -> Result<()> {
        let (mean, cov) = beta_y_conditional(self.prep, &self.b, self.sigma, self.spec.priors.coef_sd)?;
        let l = linalg::psd_sqrt(&cov)?;
        let mut r = self.block_rng(iter, BLOCK_BETA_Y);
        let z = normals(&mut r, mean.len());
        self.beta_y = (mean + l * z).as_slice().to_vec();
        Ok(())
    }

    /// Draws the outcome coefficients with `b^Y` integrated out given the
    /// remaining random effects, then `b^Y` from its exact conditional.
    fn update_outcome_collapsed(&mut self, iter: usize) -> Result<()> {
        let qy = self.layout.q_outcome;
        let k = self.layout.active_dim();
        if qy == 0 {
            return Ok(());
        }
        let g = self.cov.matrix(&self.theta);
        let rest = k - qy;
        let g_yy = g.view((0, 0), (qy, qy)).into_owned();
        let (reg, s) = if rest > 0 {
            let g_yr = g.view((0, qy), (qy, rest)).into_owned();
            let g_rr_inv = linalg::spd_inverse(&g.view((qy, qy), (rest, rest)).into_owned())?;
            let reg = &g_yr * g_rr_inv;
            let s = &g_yy - &reg * g_yr.transpose();
            (reg, linalg::clamp_psd(&linalg::symmetrize(&s))?)
        } else {
            (DMatrix::zeros(qy, 0), g_yy)
        };
        let p = self.beta_y.len();
        let s2 = self.sigma * self.sigma;
        let cond_mean = |b: &DVector<f64>| -> DVector<f64> {
            if rest > 0 {
                &reg * b.rows(qy, rest)
            } else {
                DVector::zeros(qy)
            }
        };
        // Per subject: marginal covariance of the outcomes, X' S^-1 X and X' S^-1 r.
        let parts: Vec<Option<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>> = self
            .prep
            .par_iter()
            .zip(self.b.par_iter())
            .map(|(sub, b)| {
                let o = &sub.outcome;
                let n = o.len();
                if n == 0 {
                    return Ok(None);
                }
                let x = DMatrix::from_row_slice(n, p, &o.x);
                let z = DMatrix::from_row_slice(n, qy, &o.z);
                let mu = cond_mean(b);
                let sigma_i = DMatrix::identity(n, n) * s2 + &z * &s * z.transpose();
                let ch = linalg::cholesky(&sigma_i)?;
                let r = DVector::from_column_slice(&o.response) - &z * mu;
                let sx = ch.solve(&x);
                let sr = ch.solve(&r);
                Ok(Some((sigma_i, x.transpose() * sx, x.transpose() * sr)))
            })
            .collect::<Result<_>>()?;
        let tau2 = self.spec.priors.coef_sd.powi(2);
        let mut prec = DMatrix::identity(p, p) / tau2;
        let mut rhs = DVector::zeros(p);
        for (_, xtx, xtr) in parts.iter().flatten() {
            prec += xtx;
            rhs += xtr;
        }
        let cov = linalg::spd_inverse(&prec)?;
        let mean = &cov * rhs;
        let mut r = self.block_rng(iter, BLOCK_OUTCOME_COLLAPSED);
        let beta = mean + linalg::psd_sqrt(&cov)? * normals(&mut r, p);
        self.beta_y = beta.as_slice().to_vec();
        let seed = self.cfg.seed;
        let beta_y = &self.beta_y;
        let new_by: Vec<DVector<f64>> = self
            .prep
            .par_iter()
            .zip(self.b.par_iter())
            .zip(parts.par_iter())
            .enumerate()
            .map(|(i, ((sub, b), part))| {
                let mut r = rng::stream(seed, &[channel::SAMPLER, iter as u64, BLOCK_OUTCOME_COLLAPSED, i as u64 + 1]);
                let mu = cond_mean(b);
                let (mean, cov) = match part {
                    None => (mu, s.clone()),
                    Some((sigma_i, _, _)) => {
                        let o = &sub.outcome;
                        let n = o.len();
                        let z = DMatrix::from_row_slice(n, qy, &o.z);
                        let x = DMatrix::from_row_slice(n, p, &o.x);
                        let resid = DVector::from_column_slice(&o.response) - x * DVector::from_column_slice(beta_y) - &z * &mu;
                        let ch = linalg::cholesky(sigma_i)?;
                        let sz = &s * z.transpose();
                        let gain = ch.solve(&sz.transpose()).transpose();
                        let mean = mu + &gain * resid;
                        let cov = &s - &gain * sz.transpose();
                        (mean, linalg::clamp_psd(&linalg::symmetrize(&cov))?)
                    }
                };
                Ok(mean + linalg::psd_sqrt(&cov)? * normals(&mut r, qy))
            })
            .collect::<Result<_>>()?;
        for (b, by) in self.b.iter_mut().zip(new_by) {
            b.rows_mut(0, qy).copy_from(&by);
        }
        Ok(())
    }

    fn outcome_ssr(&self) -> (f64, usize) {
        let q = self.layout.q_outcome;
        let mut ssr = 0.0;
        let mut n = 0;
        for (s, b) in self.prep.iter().zip(&self.b) {
            let o = &s.outcome;
            for r in 0..o.len() {
                let e = o.response[r] - linalg::dot(o.x_row(r), &self.beta_y) - linalg::dot(o.z_row(r), &b.as_slice()[..q]);
                ssr += e * e;
            }
            n += o.len();
        }
        (ssr, n)
    }

    fn update_sigma(&mut self, iter: usize, warmup: bool) {
        let (ssr, n) = self.outcome_ssr();
        let scale2 = self.spec.priors.sigma_scale.powi(2);
        let target = |ls: f64| {
            let s2 = (2.0 * ls).exp();
            -(n as f64) * ls - 0.5 * ssr / s2 - 0.5 * s2 / scale2 + ls
        };
        let mut r = self.block_rng(iter, BLOCK_SIGMA);
        let cur = self.sigma.ln();
        let prop = cur + self.ada_sigma.scale() * r.sample::<f64, _>(StandardNormal);
        let log_ratio = target(prop) - target(cur);
        if self.ada_sigma.step(log_ratio, r.random(), iter, warmup) {
            self.sigma = prop.exp();
        }
    }

    fn confounder_loglik(&self, beta: &[f64]) -> f64 {
        let range = self.layout.confounder_range();
        let mut ll = 0.0;
        for (s, b) in self.prep.iter().zip(&self.b) {
            let c = &s.confounder;
            let bm = &b.as_slice()[range.clone()];
            for r in 0..c.len() {
                let eta = linalg::dot(c.x_row(r), beta) + linalg::dot(c.z_row(r), bm);
                ll += bernoulli_logit_ll(c.response[r] > 0.5, eta);
            }
        }
        ll
    }

    fn treatment_loglik(&self, beta: &[f64]) -> f64 {
        let ia = self.layout.active_treatment_index();
        let mut ll = 0.0;
        for (s, b) in self.prep.iter().zip(&self.b) {
            let a = &s.treatment;
            let ba = ia.map_or(0.0, |i| b[i]);
            for r in 0..a.len() {
                let z = a.z_row(r).first().copied().unwrap_or(0.0);
                let eta = linalg::dot(a.x_row(r), beta) + z * ba;
                ll += bernoulli_logit_ll(a.response[r] > 0.5, eta);
            }
        }
        ll
    }

    fn coef_log_prior(&self, beta: &[f64]) -> f64 {
        let s2 = self.spec.priors.coef_sd.powi(2);
        -0.5 * beta.iter().map(|x| x * x).sum::<f64>() / s2
    }

    fn update_logistic(&mut self, iter: usize, warmup: bool, confounder: bool) {
        let (block, current, chol) = if confounder {
            (BLOCK_BETA_M, &self.beta_m, &self.chol_m)
        } else {
            (BLOCK_BETA_A, &self.beta_a, &self.chol_a)
        };
        if current.is_empty() {
            return;
        }
        let mut r = self.block_rng(iter, block);
        let z = normals(&mut r, current.len());
        let scale = if confounder { self.ada_m.scale() } else { self.ada_a.scale() };
        let prop: Vec<f64> = (DVector::from_column_slice(current) + chol * z * scale).as_slice().to_vec();
        let ll = |beta: &[f64]| {
            let l = if confounder { self.confounder_loglik(beta) } else { self.treatment_loglik(beta) };
            l + self.coef_log_prior(beta)
        };
        let log_ratio = ll(&prop) - ll(current);
        let u = r.random();
        let ada = if confounder { &mut self.ada_m } else { &mut self.ada_a };
        if ada.step(log_ratio, u, iter, warmup) {
            if confounder {
                self.beta_m = prop;
            } else {
                self.beta_a = prop;
            }
        }
        if warmup {
            self.reshape_proposal(iter, confounder);
        }
    }

    /// Collects coefficient draws over the second quarter of warmup and, at
    /// its midpoint, replaces the proposal shape with their covariance.
    fn reshape_proposal(&mut self, iter: usize, confounder: bool) {
        let (start, switch) = (self.cfg.n_warmup / 4, self.cfg.n_warmup / 2);
        let (beta, history) = if confounder {
            (&self.beta_m, &mut self.history_m)
        } else {
            (&self.beta_a, &mut self.history_a)
        };
        if iter >= start && iter < switch {
            history.push(beta.clone());
        }
        if iter + 1 != switch || history.len() < 10 * beta.len().max(2) {
            return;
        }
        let p = beta.len();
        let n = history.len() as f64;
        let mean: Vec<f64> = (0..p).map(|j| history.iter().map(|h| h[j]).sum::<f64>() / n).collect();
        let mut emp = DMatrix::zeros(p, p);
        for h in history.iter() {
            for i in 0..p {
                for j in 0..p {
                    emp[(i, j)] += (h[i] - mean[i]) * (h[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        history.clear();
        // Keep a small multiple of the initial shape to guard against a degenerate window.
        let (chol, ada) = if confounder { (&mut self.chol_m, &mut self.ada_m) } else { (&mut self.chol_a, &mut self.ada_a) };
        let base = &*chol * chol.transpose();
        let mixed = emp * 0.95 + base * 0.05;
        if let Ok(l) = linalg::psd_sqrt(&linalg::symmetrize(&mixed)) {
            *chol = l;
            *ada = Adaptive::new(2.38 / (p as f64).sqrt(), ada.target);
        }
    }

    /// Independence Metropolis from the Laplace approximation, or a random
    /// walk after repeated Laplace failures. Returns the updated effect,
    /// the failure count, and `(proposed, accepted, fallback)`.
    fn update_subject(
        &self,
        post: &SubjectPosterior<'_>,
        current: &DVector<f64>,
        failures: usize,
        mut r: ChaCha8Rng,
    ) -> (DVector<f64>, usize, (bool, bool, bool)) {
        let k = current.len();
        let log_post = |b: &DVector<f64>| post.log_post(b).unwrap_or(f64::NEG_INFINITY);
        match post.laplace() {
            Ok(lap) => {
                let Some(ch) = lap.cov.clone().cholesky() else {
                    return (current.clone(), failures + 1, (false, false, false));
                };
                let l = ch.l();
                let z = normals(&mut r, k);
                let prop = &lap.mode + &l * &z;
                let back = l.solve_lower_triangular(&(current - &lap.mode)).expect("triangular solve");
                let log_q_prop = -0.5 * z.norm_squared();
                let log_q_cur = -0.5 * back.norm_squared();
                let log_ratio = log_post(&prop) - log_post(current) + log_q_cur - log_q_prop;
                let accept = r.random::<f64>() < log_ratio.min(0.0).exp();
                let next = if accept { prop } else { current.clone() };
                (next, 0, (true, accept, false))
            }
            Err(_) if failures + 1 >= LAPLACE_FAILURES_BEFORE_RW => {
                let g = &post.prior.g;
                let Ok(l) = linalg::psd_sqrt(g) else {
                    return (current.clone(), failures + 1, (false, false, true));
                };
                let scale = 2.38 / ((k as f64).sqrt() * (1.0 + post.terms.n_terms() as f64).sqrt());
                let prop = current + l * normals(&mut r, k) * scale;
                let log_ratio = log_post(&prop) - log_post(current);
                let accept = r.random::<f64>() < log_ratio.min(0.0).exp();
                let next = if accept { prop } else { current.clone() };
                (next, failures + 1, (true, accept, true))
            }
            Err(_) => (current.clone(), failures + 1, (false, false, false)),
        }
    }

    fn g_log_target(&self, theta: &[f64]) -> f64 {
        let l = self.cov.cholesky(theta);
        let log_det_half: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
        let mut quad = 0.0;
        for b in &self.b {
            match l.solve_lower_triangular(b) {
                Some(w) => quad += w.norm_squared(),
                None => return f64::NEG_INFINITY,
            }
        }
        let v = -(self.b.len() as f64) * log_det_half - 0.5 * quad + self.cov.log_prior(theta, &self.spec.priors);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Component-wise random walk on the unconstrained covariance parameters
    /// with the random effects held fixed.
    fn update_g(&mut self, iter: usize, warmup: bool) {
        let mut r = self.block_rng(iter, BLOCK_G);
        let mut current = self.g_log_target(&self.theta);
        for c in 0..self.theta.len() {
            let mut prop = self.theta.clone();
            prop[c] += self.ada_g[c].scale() * r.sample::<f64, _>(StandardNormal);
            let target = self.g_log_target(&prop);
            if self.ada_g[c].step(target - current, r.random(), iter, warmup) {
                self.theta = prop;
                current = target;
            }
        }
    }

    /// Component-wise joint move of the covariance parameters and the random
    /// effects that keeps the whitened effects `L^{-1} b` fixed.
    fn update_g_whitened(&mut self, iter: usize, warmup: bool, posts: &[SubjectPosterior<'_>]) {
        let mut r = self.block_rng(iter, BLOCK_G_WHITENED);
        let loglik = |b: &[DVector<f64>]| -> Vec<f64> {
            posts
                .par_iter()
                .zip(b.par_iter())
                .map(|(p, b)| p.terms.log_lik(b.as_slice()).unwrap_or(f64::NEG_INFINITY))
                .collect()
        };
        let mut current_ll = loglik(&self.b);
        let priors = &self.spec.priors;
        for c in 0..self.theta.len() {
            let mut prop = self.theta.clone();
            prop[c] += self.ada_gw[c].scale() * r.sample::<f64, _>(StandardNormal);
            let l_cur = self.cov.cholesky(&self.theta);
            let l_new = self.cov.cholesky(&prop);
            let moved: Option<Vec<DVector<f64>>> = self
                .b
                .iter()
                .map(|b| l_cur.solve_lower_triangular(b).map(|w| &l_new * w))
                .collect();
            let u: f64 = r.random();
            let Some(moved) = moved else {
                continue;
            };
            let new_ll = loglik(&moved);
            let delta: f64 = new_ll.iter().zip(&current_ll).map(|(a, b)| a - b).sum();
            let log_ratio = delta + self.cov.log_prior(&prop, priors) - self.cov.log_prior(&self.theta, priors);
            if self.ada_gw[c].step(log_ratio, u, iter, warmup) {
                self.theta = prop;
                self.b = moved;
                current_ll = new_ll;
            }
        }
    }

    fn sweep(&mut self, iter: usize, warmup: bool) -> Result<()> {
        self.update_beta_y(iter)?;
        self.update_outcome_collapsed(iter)?;
        self.update_sigma(iter, warmup);
        self.update_logistic(iter, warmup, true);
        self.update_logistic(iter, warmup, false);
        if self.layout.active_dim() == 0 {
            return Ok(());
        }
        let prior = ReffPrior::new(self.cov.matrix(&self.theta))?;
        let posts: Vec<SubjectPosterior<'_>> = self
            .prep
            .par_iter()
            .map(|s| SubjectPosterior::new(self.terms(s), &prior))
            .collect();
        let seed = self.cfg.seed;
        let results: Vec<_> = posts
            .par_iter()
            .enumerate()
            .map(|(i, post)| {
                let r = rng::stream(seed, &[channel::SAMPLER, iter as u64, BLOCK_REFF, i as u64]);
                self.update_subject(post, &self.b[i], self.failures[i], r)
            })
            .collect();
        for (i, (b, fails, (proposed, accepted, fallback))) in results.into_iter().enumerate() {
            self.b[i] = b;
            self.failures[i] = fails;
            if !warmup {
                self.b_proposed += u64::from(proposed);
                self.b_accepted += u64::from(accepted);
                self.b_fallbacks += u64::from(fallback);
            }
        }
        self.update_g(iter, warmup);
        self.update_g_whitened(iter, warmup, &posts);
        Ok(())
    }

    fn current_draw(&self) -> ParamsDraw {
        let full = self.layout.full_dim();
        let k = self.layout.active_dim();
        let mut g = DMatrix::zeros(full, full);
        if k > 0 {
            g.view_mut((0, 0), (k, k)).copy_from(&self.cov.matrix(&self.theta));
        }
        if let Some(ia) = self.layout.treatment_index() {
            g[(ia, ia)] = self.spec.v;
        }
        ParamsDraw {
            beta_y: self.beta_y.clone(),
            sigma: self.sigma,
            beta_m: self.beta_m.clone(),
            beta_a: self.beta_a.clone(),
            g,
        }
    }

    fn acceptance(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("sigma".to_string(), self.ada_sigma.rate());
        if !self.beta_m.is_empty() {
            out.insert("beta_m".to_string(), self.ada_m.rate());
        }
        if !self.beta_a.is_empty() {
            out.insert("beta_a".to_string(), self.ada_a.rate());
        }
        if self.layout.active_dim() > 0 {
            let rate = if self.b_proposed == 0 { f64::NAN } else { self.b_accepted as f64 / self.b_proposed as f64 };
            out.insert("random_effects".to_string(), rate);
            let mean_rate = |a: &[Adaptive]| a.iter().map(Adaptive::rate).sum::<f64>() / a.len().max(1) as f64;
            out.insert("covariance".to_string(), mean_rate(&self.ada_g));
            out.insert("covariance_whitened".to_string(), mean_rate(&self.ada_gw));
        }
        out
    }
}

/// Samples the joint posterior of the population parameters.
///
/// The sweep updates, in order: the outcome coefficients from their Gaussian
/// full conditional; the outcome noise sd by Metropolis on its log; the
/// confounder and treatment coefficients by adaptive random-walk Metropolis;
/// each subject's random effects by independence Metropolis from its Laplace
/// approximation; and the covariance parameters, once with the random effects
/// fixed and once with their whitened values fixed.
pub fn fit_mglmm(data: &LongDataset, spec: &ModelSpec, mcmc: &McmcConfig) -> Result<PosteriorDraws> {
    spec.validate()?;
    spec.priors.validate()?;
    mcmc.validate()?;
    let report = validate_dataset(data, spec);
    if !report.is_empty() {
        return Err(Error::Data(report.to_string()));
    }
    let prep = prepare(data, spec)?;
    let mut chain = Chain::new(spec, &prep, mcmc)?;
    chain.check_initial()?;
    let total = mcmc.n_warmup + mcmc.n_draws * mcmc.thin;
    let mut draws = Vec::with_capacity(mcmc.n_draws);
    for iter in 0..total {
        let warmup = iter < mcmc.n_warmup;
        chain.sweep(iter, warmup)?;
        if !warmup && (iter - mcmc.n_warmup) % mcmc.thin == mcmc.thin - 1 {
            draws.push(chain.current_draw());
        }
        if (iter + 1) % 500 == 0 {
            log::debug!("iteration {}/{total}", iter + 1);
        }
    }
    let acceptance = chain.acceptance();
    if chain.b_fallbacks > 0 {
        log::warn!("random-walk fallback used for {} random-effect updates", chain.b_fallbacks);
    }
    let names = column_names(spec);
    let rows: Vec<Vec<f64>> = draws.iter().map(flatten).collect();
    let mut ess = BTreeMap::new();
    for (c, name) in names.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        if col.iter().any(|x| *x != col[0]) {
            ess.insert(name.clone(), effective_sample_size(&col));
        }
    }
    log::info!("sampling finished: acceptance {acceptance:?}");
    Ok(PosteriorDraws { spec: spec.clone(), draws, acceptance, ess, mcmc: mcmc.clone() })
}
