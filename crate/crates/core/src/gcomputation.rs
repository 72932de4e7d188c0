//! Counterfactual trajectories under treatment regimes and the contrasts
//! built from them: subgroup-averaged outcome differences and the mixed
//! average treatment effect.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heterogeneity::{
    condition_on_ba, sample_ba_given_history, ConditionalGaussian, HistorySlice, ReffPrior, SubjectPosterior, SubjectTerms,
};
use crate::inference::PosteriorDraws;
use crate::linalg::{self, sigmoid};
use crate::model::design::fill_rows;
use crate::model::{Channel, HistoryView, LongDataset, ModelSpec, NoisePanel, NoiseRow, ParamsDraw, Regime, RegimeContext, SubjectRecord};
use crate::rng::{self, channel};

/// Projected intervals `h+1..=h+tau` of one subject under one regime.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub intervals: Vec<usize>,
    /// Generated outcomes, including latent values where `m` is false.
    pub y: Vec<f64>,
    pub m: Vec<bool>,
    pub a: Vec<bool>,
}

/// Working copy of a history that grows as intervals are projected.
struct Working {
    baseline: Vec<f64>,
    y: Vec<Option<f64>>,
    m: Vec<bool>,
    a: Vec<bool>,
}

impl Working {
    fn view(&self, len: usize, a_len: usize) -> HistoryView<'_> {
        HistoryView { baseline: &self.baseline, y: &self.y[..len], m: &self.m[..len], a: &self.a[..a_len] }
    }
}

/// Gaussian for `(b^Y, b^M)` at one step: the Laplace approximation on the
/// accumulated history, conditioned on `b^A` when that block is active.
fn dynamic_posterior(
    w: &Working,
    t: usize,
    h: usize,
    params: &ParamsDraw,
    prior: &ReffPrior,
    spec: &ModelSpec,
    ba: f64,
) -> Result<ConditionalGaussian> {
    let history = HistorySlice { view: w.view(t, t), t: t - 1, h };
    let terms = SubjectTerms::from_history(&history, params, spec)?;
    let summary = match SubjectPosterior::new(terms, prior).laplace() {
        Ok(s) => s,
        Err(e @ (Error::LaplaceFailure { .. } | Error::Matrix(_))) => {
            log::warn!("laplace approximation failed at interval {t} ({e}); using the random-effect prior");
            SubjectPosterior::new(SubjectTerms::new(spec.layout(), params.sigma), prior).laplace()?
        }
        Err(e) => return Err(e),
    };
    if spec.layout().active_treatment_index().is_some() {
        condition_on_ba(&summary, ba)
    } else {
        Ok(summary.dynamic_marginal())
    }
}

fn project_inner(
    subject: &SubjectRecord,
    h: usize,
    regime: &Regime,
    tau: usize,
    params: &ParamsDraw,
    prior: &ReffPrior,
    spec: &ModelSpec,
    ba: f64,
    noise: &NoiseRow<'_>,
) -> std::result::Result<Trajectory, (usize, Error)> {
    let layout = spec.layout();
    let mut w = Working {
        baseline: subject.baseline.clone(),
        y: subject.y[..=h].to_vec(),
        m: subject.m[..=h].to_vec(),
        a: subject.a[..=h].to_vec(),
    };
    let mut out = Trajectory { intervals: Vec::new(), y: Vec::new(), m: Vec::new(), a: Vec::new() };
    let (mut x, mut z) = (Vec::new(), Vec::new());
    for step in 0..tau {
        let t = h + 1 + step;
        let fail = |e: Error| (t, e);
        let cond = dynamic_posterior(&w, t, h, params, prior, spec, ba).map_err(fail)?;
        let b = cond.draw_with(noise.b_normals(step)).map_err(fail)?;
        let a_t = {
            let ctx = RegimeContext { t, history: w.view(t, t), observed_a: &subject.a };
            regime.decide(&ctx)
        };
        w.a.push(a_t);
        let m_t = if spec.confounder_enabled {
            fill_rows(spec, Channel::Confounder, &w.view(t, t + 1), t, &mut x, &mut z).map_err(fail)?;
            let eta = linalg::dot(&x, &params.beta_m) + linalg::dot(&z, &b.as_slice()[layout.confounder_range()]);
            noise.psi_m[step] <= sigmoid(eta)
        } else {
            true
        };
        fill_rows(spec, Channel::Outcome, &w.view(t, t + 1), t, &mut x, &mut z).map_err(fail)?;
        let eta = linalg::dot(&x, &params.beta_y) + linalg::dot(&z, &b.as_slice()[layout.outcome_range()]);
        let y_t = eta + params.sigma * noise.psi_y[step];
        if !y_t.is_finite() {
            return Err((t, Error::NonFinite { what: "counterfactual outcome", subject: subject.id.clone(), interval: t }));
        }
        w.y.push(m_t.then_some(y_t));
        w.m.push(m_t);
        out.intervals.push(t);
        out.y.push(y_t);
        out.m.push(m_t);
        out.a.push(a_t);
    }
    Ok(out)
}

/// Projects one subject from its history through `h` for `tau` intervals
/// under `regime`, holding the treatment random effect at `ba`.
///
/// At each interval the random-effect posterior is recomputed on the
/// observed plus already projected history (treatment information through
/// `h` only), `(b^Y, b^M)` is drawn given `b^A = ba` with the panel's
/// normals, and the confounder and outcome are generated from the panel's
/// uniform and normal. `draw` labels errors.
#[allow(clippy::too_many_arguments)]
pub fn project_counterfactual(
    subject: &SubjectRecord,
    h: usize,
    regime: &Regime,
    tau: usize,
    params: &ParamsDraw,
    prior: &ReffPrior,
    spec: &ModelSpec,
    ba: f64,
    noise: &NoiseRow<'_>,
    draw: usize,
) -> Result<Trajectory> {
    if h > subject.n_intervals() {
        return Err(Error::Request(format!(
            "subject {}: horizon {h} beyond its {} observed intervals",
            subject.id,
            subject.n_intervals()
        )));
    }
    if noise.tau() < tau {
        return Err(Error::Request(format!("noise row covers {} steps, need {tau}", noise.tau())));
    }
    project_inner(subject, h, regime, tau, params, prior, spec, ba, noise).map_err(|(interval, source)| Error::Trajectory {
        subject: subject.id.clone(),
        interval,
        draw,
        source: Box::new(source),
    })
}

/// Inputs of a subgroup contrast `q1` versus `q2`.
#[derive(Clone, Debug)]
pub struct ContrastRequest<'a> {
    pub data: &'a LongDataset,
    /// Subject ids with their conditioning intervals.
    pub subgroup: Vec<(String, usize)>,
    pub regimes: (Regime, Regime),
    pub tau: usize,
    /// Must equal the `v` the draws were fitted with.
    pub v: f64,
    pub draws: &'a PosteriorDraws,
    pub seed: u64,
    pub keep_trajectories: bool,
}

/// Posterior summary of one horizon step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub j: usize,
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Both regimes' trajectories for one subject and draw.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPair {
    pub subject: String,
    pub draw: usize,
    pub q1: Trajectory,
    pub q2: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastManifest {
    pub version: String,
    pub regimes: (String, String),
    pub v: f64,
    pub tau: usize,
    pub seed: u64,
    pub spec_hash: String,
    pub n_subjects: usize,
    pub n_draws: usize,
}

#[derive(Clone, Debug)]
pub struct ContrastResult {
    /// `samples[j][l]` is the subgroup-averaged difference at step `j` for draw `l`.
    pub samples: Vec<Vec<f64>>,
    pub summary: Vec<StepSummary>,
    pub trajectories: Option<Vec<TrajectoryPair>>,
    pub manifest: ContrastManifest,
}

/// Mean and equal-tailed 95% interval of a sample.
pub fn summarize(j: usize, xs: &[f64]) -> StepSummary {
    StepSummary { j, mean: linalg::mean(xs), lo95: linalg::quantile(xs, 0.025), hi95: linalg::quantile(xs, 0.975) }
}

/// Conditional mixed average treatment effect of `q1` versus `q2` over the
/// subgroup, one sample per posterior draw.
///
/// For every draw and subject, `b^A` is drawn from its posterior given the
/// history through `h_i` and both regimes are projected with the same noise
/// row, so identical regimes give exactly zero differences.
pub fn subgroup_contrast(req: &ContrastRequest<'_>) -> Result<ContrastResult> {
    let spec = &req.draws.spec;
    if req.subgroup.is_empty() {
        return Err(Error::Request("empty subgroup".into()));
    }
    if req.tau == 0 {
        return Err(Error::Request("tau must be at least 1".into()));
    }
    if req.v != spec.v {
        return Err(Error::Request(format!("requested v = {} but draws were fitted with v = {}", req.v, spec.v)));
    }
    if req.draws.is_empty() {
        return Err(Error::Request("no posterior draws".into()));
    }
    let mut members = Vec::with_capacity(req.subgroup.len());
    for (id, h) in &req.subgroup {
        let (_, s) = req.data.find(id).ok_or_else(|| Error::Request(format!("subject {id} not in dataset")))?;
        if *h > s.n_intervals() {
            return Err(Error::Request(format!("subject {id}: h = {h} beyond its {} intervals", s.n_intervals())));
        }
        members.push((s, *h));
    }
    let priors: Vec<ReffPrior> = req
        .draws
        .draws
        .iter()
        .map(|d| ReffPrior::from_params(d, spec))
        .collect::<Result<_>>()?;
    let n_draws = req.draws.len();
    let q = spec.layout().dynamic_dim();
    let (q1, q2) = &req.regimes;
    let keep = req.keep_trajectories;

    type SubjectOut = (Vec<f64>, Vec<TrajectoryPair>);
    let per_subject: Vec<SubjectOut> = members
        .par_iter()
        .enumerate()
        .map(|(i, (s, h))| -> Result<SubjectOut> {
            let panel = NoisePanel::generate(req.seed, &[i as u64], n_draws, req.tau, q);
            let mut diffs = Vec::with_capacity(n_draws * req.tau);
            let mut pairs = Vec::new();
            for (l, (params, prior)) in req.draws.draws.iter().zip(&priors).enumerate() {
                let mut r = rng::stream(req.seed, &[channel::SENSITIVITY, i as u64, l as u64]);
                let ba = sample_ba_given_history(&s.view(), *h, params, spec, prior, &mut r)?;
                let row = panel.row(l);
                let t1 = project_counterfactual(s, *h, q1, req.tau, params, prior, spec, ba, &row, l)?;
                let t2 = project_counterfactual(s, *h, q2, req.tau, params, prior, spec, ba, &row, l)?;
                diffs.extend(t1.y.iter().zip(&t2.y).map(|(a, b)| a - b));
                if keep {
                    pairs.push(TrajectoryPair { subject: s.id.clone(), draw: l, q1: t1, q2: t2 });
                }
            }
            Ok((diffs, pairs))
        })
        .collect::<Result<_>>()?;

    let n = members.len() as f64;
    let mut samples = vec![vec![0.0; n_draws]; req.tau];
    for (diffs, _) in &per_subject {
        for l in 0..n_draws {
            for j in 0..req.tau {
                samples[j][l] += diffs[l * req.tau + j];
            }
        }
    }
    for col in &mut samples {
        for x in col.iter_mut() {
            *x /= n;
        }
    }
    let summary = samples.iter().enumerate().map(|(j, xs)| summarize(j, xs)).collect();
    let trajectories = keep.then(|| per_subject.into_iter().flat_map(|(_, p)| p).collect());
    let manifest = ContrastManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        regimes: (q1.to_string(), q2.to_string()),
        v: req.v,
        tau: req.tau,
        seed: req.seed,
        spec_hash: spec.hash(),
        n_subjects: members.len(),
        n_draws,
    };
    Ok(ContrastResult { samples, summary, trajectories, manifest })
}

/// Posterior samples of the mixed average treatment effect at the last of
/// `tau` intervals: every subject conditioned on baseline only, so `b^A`
/// is drawn from `N(0, v)`.
pub fn mixed_ate(
    data: &LongDataset,
    regimes: (Regime, Regime),
    tau: usize,
    draws: &PosteriorDraws,
    v: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let req = ContrastRequest {
        data,
        subgroup: data.subjects.iter().map(|s| (s.id.clone(), 0)).collect(),
        regimes,
        tau,
        v,
        draws,
        seed,
        keep_trajectories: false,
    };
    let mut res = subgroup_contrast(&req)?;
    Ok(res.samples.swap_remove(tau - 1))
}

impl ContrastResult {
    /// Columns `j, draw, D_j`.
    pub fn write_samples_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["j", "draw", "D_j"])?;
        for (j, col) in self.samples.iter().enumerate() {
            for (l, d) in col.iter().enumerate() {
                w.write_record([j.to_string(), l.to_string(), format!("{d}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `j, mean, lo95, hi95`.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["j", "mean", "lo95", "hi95"])?;
        for s in &self.summary {
            w.write_record([s.j.to_string(), format!("{}", s.mean), format!("{}", s.lo95), format!("{}", s.hi95)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>_draws.csv`, `<stem>_summary.csv` and `<stem>_manifest.json` into `dir`.
    pub fn write_files(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        self.write_samples_csv(BufWriter::new(File::create(dir.join(format!("{stem}_draws.csv")))?))?;
        self.write_summary_csv(BufWriter::new(File::create(dir.join(format!("{stem}_summary.csv")))?))?;
        let mut f = BufWriter::new(File::create(dir.join(format!("{stem}_manifest.json")))?);
        serde_json::to_writer_pretty(&mut f, &self.manifest)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

/// The `(b^Y, b^M)` draw used at one step, exposed for diagnostics.
pub fn step_reffects(
    subject: &SubjectRecord,
    t: usize,
    h: usize,
    params: &ParamsDraw,
    prior: &ReffPrior,
    spec: &ModelSpec,
    ba: f64,
) -> Result<ConditionalGaussian> {
    let w = Working {
        baseline: subject.baseline.clone(),
        y: subject.y.clone(),
        m: subject.m.clone(),
        a: subject.a.clone(),
    };
    if t == 0 || t > subject.n_intervals() {
        return Err(Error::Request(format!("interval {t} outside 1..={}", subject.n_intervals())));
    }
    dynamic_posterior(&w, t, h.min(t - 1), params, prior, spec, ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::McmcConfig;
    use crate::model::FeatureTerm;
    use nalgebra::DMatrix;
    use std::collections::BTreeMap;

    fn fixed_effects_spec() -> ModelSpec {
        let mut spec = ModelSpec::simulation_study(0.0);
        spec.outcome_features = vec![FeatureTerm::Intercept, FeatureTerm::LaggedOutcome { fill: 0.0 }];
        spec.outcome_reff_design = vec![];
        spec.treatment_reff_design = vec![];
        spec
    }

    fn subject() -> SubjectRecord {
        SubjectRecord {
            id: "s".into(),
            baseline: vec![1.0],
            y: vec![Some(2.0), Some(1.0)],
            m: vec![true; 2],
            a: vec![false; 2],
        }
    }

    #[test]
    fn noise_free_recursion_by_hand() {
        let spec = fixed_effects_spec();
        let mut p = ParamsDraw::zeros(&spec, 0.0);
        p.beta_y = vec![1.0, 0.5];
        let prior = ReffPrior::from_params(&p, &spec).unwrap();
        let panel = NoisePanel::constant(1, 2, 0, 0.5);
        let traj = project_counterfactual(&subject(), 1, &Regime::AlwaysTreat, 2, &p, &prior, &spec, 0.0, &panel.row(0), 0).unwrap();
        // Y2 = 1 + 0.5 * 1 = 1.5; Y3 = 1 + 0.5 * 1.5 = 1.75
        assert_eq!(traj.y, vec![1.5, 1.75]);
        assert_eq!(traj.intervals, vec![2, 3]);
        assert_eq!(traj.a, vec![true, true]);
    }

    #[test]
    fn identical_regimes_give_zero_contrast() {
        let spec = ModelSpec::simulation_study(0.25);
        let mut p = ParamsDraw::zeros(&spec, 0.4);
        p.beta_y = vec![0.4, -0.3, -0.1, 0.5, 1.0, 0.4];
        p.beta_a = vec![0.0, -0.1, -0.5, -0.35];
        p.g = DMatrix::from_row_slice(2, 2, &[0.64, 0.2, 0.2, 0.25]);
        let data = LongDataset { subjects: vec![subject()] };
        let draws = PosteriorDraws {
            spec: spec.clone(),
            draws: vec![p.clone(), p],
            acceptance: BTreeMap::new(),
            ess: BTreeMap::new(),
            mcmc: McmcConfig::default(),
        };
        let req = ContrastRequest {
            data: &data,
            subgroup: vec![("s".into(), 1)],
            regimes: (Regime::InitiateAt(3), Regime::InitiateAt(3)),
            tau: 3,
            v: 0.25,
            draws: &draws,
            seed: 5,
            keep_trajectories: true,
        };
        let res = subgroup_contrast(&req).unwrap();
        assert!(res.samples.iter().flatten().all(|d| *d == 0.0));
        assert_eq!(res.trajectories.unwrap().len(), 2);
        let mut bad = req.clone();
        bad.subgroup.clear();
        assert!(matches!(subgroup_contrast(&bad), Err(Error::Request(_))));
        bad = req.clone();
        bad.v = 1.0;
        assert!(matches!(subgroup_contrast(&bad), Err(Error::Request(_))));
    }

    #[test]
    fn prior_step_uses_conditional_of_g() {
        let spec = ModelSpec::simulation_study(0.25);
        let mut p = ParamsDraw::zeros(&spec, 0.4);
        p.g = DMatrix::from_row_slice(2, 2, &[0.64, 0.2, 0.2, 0.25]);
        let prior = ReffPrior::from_params(&p, &spec).unwrap();
        let c = step_reffects(&subject(), 1, 0, &p, &prior, &spec, 0.5).unwrap();
        assert!((c.mean[0] - 0.2 / 0.25 * 0.5).abs() < 1e-12);
        assert!((c.cov[(0, 0)] - (0.64 - 0.04 / 0.25)).abs() < 1e-12);
    }
}
