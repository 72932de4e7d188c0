//! Forward simulation: the two-interval study design with known causal
//! effect, and generic simulation from any joint model specification.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sigmoid};
use crate::model::design::fill_rows;
use crate::model::{Channel, HistoryView, LongDataset, ModelSpec, ParamsDraw, SubjectRecord};
use crate::rng::{self, channel};

/// Treatment-effect scenario of the study design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `nu_k = k`: half a unit per cumulative dose level.
    PerDose,
    /// `nu_k = 0`: no treatment effect.
    Null,
}

impl Scenario {
    /// Outcome shift for cumulative dose `k` (`nu_k / 2`).
    pub fn dose_effect(self, k: usize) -> f64 {
        match self {
            Scenario::PerDose => k as f64 / 2.0,
            Scenario::Null => 0.0,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_dose" => Ok(Scenario::PerDose),
            "null" => Ok(Scenario::Null),
            _ => Err(Error::Config(format!("unknown scenario {s:?} (per_dose | null)"))),
        }
    }
}

pub const DGP_INTERVALS: usize = 2;
pub const DGP_NOISE_SD: f64 = 0.4;
pub const DGP_S_Y: f64 = 0.8;

/// Configuration of the two-interval simulation design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub s_a: f64,
    #[serde(default = "default_s_y")]
    pub s_y: f64,
    pub rho: f64,
    pub scenario: Scenario,
    pub seed: u64,
}

fn default_s_y() -> f64 {
    DGP_S_Y
}

impl DgpConfig {
    pub fn new(n: usize, s_a: f64, rho: f64, scenario: Scenario, seed: u64) -> Self {
        Self { n, s_a, s_y: DGP_S_Y, rho, scenario, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if !(self.s_a.is_finite() && self.s_a >= 0.0 && self.s_y.is_finite() && self.s_y >= 0.0) {
            return Err(Error::Config("random-intercept sds must be finite and nonnegative".into()));
        }
        if self.s_a > 0.0 && self.s_y > 0.0 && !(self.rho.abs() < 1.0) {
            return Err(Error::Config(format!("|rho| must be < 1 for a positive-definite G, got {}", self.rho)));
        }
        Ok(())
    }

    /// `rho` is irrelevant when either sd is zero.
    pub fn effective_rho(&self) -> f64 {
        if self.s_a == 0.0 || self.s_y == 0.0 {
            0.0
        } else {
            self.rho
        }
    }

    /// Covariance of `(b^Y, b^A)` in the crate's block order.
    pub fn g(&self) -> DMatrix<f64> {
        let c = self.effective_rho() * self.s_a * self.s_y;
        DMatrix::from_row_slice(2, 2, &[self.s_y * self.s_y, c, c, self.s_a * self.s_a])
    }

    /// The design expressed as a joint model: spec (with `v = s_A^2`) and truth.
    pub fn as_model(&self) -> (ModelSpec, ParamsDraw) {
        let spec = ModelSpec::simulation_study(self.s_a * self.s_a);
        let truth = ParamsDraw {
            beta_y: vec![
                0.4,
                -0.3,
                -0.1,
                self.scenario.dose_effect(1),
                self.scenario.dose_effect(2),
                0.4,
            ],
            sigma: DGP_NOISE_SD,
            beta_m: vec![],
            beta_a: vec![0.0, -0.1, -0.5, -0.35],
            g: self.g(),
        };
        (spec, truth)
    }
}

/// Simulated data together with the realized random effects `(b^Y, b^A)`.
#[derive(Clone, Debug)]
pub struct DgpSample {
    pub data: LongDataset,
    pub effects: Vec<[f64; 2]>,
}

fn dgp_subject(cfg: &DgpConfig, i: usize) -> (SubjectRecord, [f64; 2]) {
    let key = i as u64;
    let mut r0 = rng::stream(cfg.seed, &[key, 0, channel::BASELINE]);
    let v = f64::from(u8::from(r0.random::<f64>() < 0.5));
    let y0: f64 = r0.sample(StandardNormal);
    let mut rb = rng::stream(cfg.seed, &[key, 0, channel::RANDOM_EFFECT]);
    let z1: f64 = rb.sample(StandardNormal);
    let z2: f64 = rb.sample(StandardNormal);
    let rho = cfg.effective_rho();
    let b_y = cfg.s_y * z1;
    let b_a = cfg.s_a * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);

    let mut y = vec![Some(y0)];
    let mut a = vec![false];
    let mut dose = 0usize;
    let mut y_prev = y0;
    for t in 1..=DGP_INTERVALS {
        let tf = t as f64;
        let treated = if a[t - 1] {
            true
        } else {
            let p = sigmoid(-0.1 * v - 0.5 * tf - 0.35 * y_prev + b_a);
            rng::stream(cfg.seed, &[key, t as u64, channel::TREATMENT]).random::<f64>() < p
        };
        a.push(treated);
        dose += usize::from(treated);
        let e: f64 = rng::stream(cfg.seed, &[key, t as u64, channel::OUTCOME]).sample(StandardNormal);
        let dose_term = if dose >= 1 { cfg.scenario.dose_effect(dose.min(2)) } else { 0.0 };
        let yt = 0.4 - 0.3 * v - 0.1 * tf + dose_term + 0.4 * y_prev + b_y + DGP_NOISE_SD * e;
        y.push(Some(yt));
        y_prev = yt;
    }
    let record = SubjectRecord {
        id: format!("{}", i + 1),
        baseline: vec![v],
        y,
        m: vec![true; DGP_INTERVALS + 1],
        a,
    };
    (record, [b_y, b_a])
}

/// Simulates the two-interval design, also returning the random effects.
pub fn simulate_dgp_detailed(cfg: &DgpConfig) -> Result<DgpSample> {
    cfg.validate()?;
    let (subjects, effects): (Vec<_>, Vec<_>) = (0..cfg.n).into_par_iter().map(|i| dgp_subject(cfg, i)).unzip();
    Ok(DgpSample { data: LongDataset { subjects }, effects })
}

/// Simulates the two-interval design. Confounder indicators are all 1.
pub fn simulate_dgp(cfg: &DgpConfig) -> Result<LongDataset> {
    Ok(simulate_dgp_detailed(cfg)?.data)
}

fn mglmm_subject(
    spec: &ModelSpec,
    truth: &ParamsDraw,
    g_sqrt: &DMatrix<f64>,
    n_baseline: usize,
    intervals: usize,
    seed: u64,
    i: usize,
) -> Result<SubjectRecord> {
    let key = i as u64;
    let layout = spec.layout();
    let mut r0 = rng::stream(seed, &[key, 0, channel::BASELINE]);
    let baseline: Vec<f64> = (0..n_baseline).map(|_| f64::from(u8::from(r0.random::<f64>() < 0.5))).collect();
    let y0: f64 = r0.sample(StandardNormal);
    let mut rb = rng::stream(seed, &[key, 0, channel::RANDOM_EFFECT]);
    let z = DVector::from_fn(layout.full_dim(), |_, _| rb.sample::<f64, _>(StandardNormal));
    let b = g_sqrt * z;
    let b_y = b.rows_range(layout.outcome_range()).into_owned();
    let b_m = b.rows_range(layout.confounder_range()).into_owned();
    let b_a = layout.treatment_index().map_or(0.0, |i| b[i]);

    let mut y = vec![Some(y0)];
    let mut m = vec![true];
    let mut a = vec![false];
    let (mut x, mut zr) = (Vec::new(), Vec::new());
    for t in 1..=intervals {
        let tk = t as u64;
        let treated = if a[t - 1] {
            true
        } else if spec.treatment_modeled() {
            let view = HistoryView { baseline: &baseline, y: &y, m: &m, a: &a };
            fill_rows(spec, Channel::Treatment, &view, t, &mut x, &mut zr)?;
            let eta = linalg::dot(&x, &truth.beta_a) + zr.first().map_or(0.0, |z| z * b_a);
            rng::stream(seed, &[key, tk, channel::TREATMENT]).random::<f64>() < sigmoid(eta)
        } else {
            false
        };
        a.push(treated);
        let observed = if spec.confounder_enabled {
            let view = HistoryView { baseline: &baseline, y: &y, m: &m, a: &a };
            fill_rows(spec, Channel::Confounder, &view, t, &mut x, &mut zr)?;
            let eta = linalg::dot(&x, &truth.beta_m) + linalg::dot(&zr, b_m.as_slice());
            rng::stream(seed, &[key, tk, channel::CONFOUNDER]).random::<f64>() < sigmoid(eta)
        } else {
            true
        };
        let view = HistoryView { baseline: &baseline, y: &y, m: &m, a: &a };
        fill_rows(spec, Channel::Outcome, &view, t, &mut x, &mut zr)?;
        let eta = linalg::dot(&x, &truth.beta_y) + linalg::dot(&zr, b_y.as_slice());
        let e: f64 = rng::stream(seed, &[key, tk, channel::OUTCOME]).sample(StandardNormal);
        y.push(observed.then_some(eta + truth.sigma * e));
        m.push(observed);
    }
    Ok(SubjectRecord { id: format!("{}", i + 1), baseline, y, m, a })
}

/// Simulates `n` subjects over `intervals` follow-up intervals from the
/// joint model `spec` with parameters `truth`. Baseline covariates are
/// Bernoulli(0.5), `Y_0 ~ N(0, 1)`, `A_0 = 0`, `M_0 = 1`.
pub fn simulate_mglmm(spec: &ModelSpec, truth: &ParamsDraw, n: usize, intervals: usize, seed: u64) -> Result<LongDataset> {
    spec.validate()?;
    truth.validate(spec)?;
    if intervals == 0 {
        return Err(Error::Config("need at least one follow-up interval".into()));
    }
    let g_sqrt = linalg::psd_sqrt(&truth.g)?;
    let p = spec.required_baseline_len();
    let subjects = (0..n)
        .into_par_iter()
        .map(|i| mglmm_subject(spec, truth, &g_sqrt, p, intervals, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(LongDataset { subjects })
}
