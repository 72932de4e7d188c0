//! The two-interval simulation study: closed-form and brute-force effect
//! oracles, and a grid of fits over true `(s_A, rho)` and posited `s_A`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcomputation::mixed_ate;
use crate::inference::{fit_mglmm, McmcConfig};
use crate::linalg;
use crate::model::Regime;
use crate::rng::{self, channel};
use crate::simulator::{simulate_dgp, DgpConfig, Scenario, DGP_NOISE_SD};

/// `E[Y_2(a1, a2)] - E[Y_2(0, 0)]` in the simulation design.
pub fn closed_form_ate(a1: u8, a2: u8, scenario: Scenario) -> Result<f64> {
    if a1 > 1 || a2 > 1 {
        return Err(Error::Domain(format!("treatment values must be 0 or 1, got ({a1}, {a2})")));
    }
    if a1 == 1 && a2 == 0 {
        return Err(Error::Domain("path (1, 0) is not monotone".into()));
    }
    if scenario == Scenario::Null {
        return Ok(0.0);
    }
    let k = usize::from(a1 + a2);
    let dose = if k == 0 { 0.0 } else { k as f64 / 2.0 };
    Ok(dose + 0.4 * 0.5 * f64::from(a1))
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
}

const ORACLE_CHUNK: usize = 10_000;

/// Sum and sum of squares of `Y_2` for `n` independent subjects of the design
/// with the treatment path forced to `(a1, a2)`.
fn forced_arm(cfg: &DgpConfig, path: (u8, u8), n: usize, seed: u64, arm: u64) -> (f64, f64) {
    let chunks = n.div_ceil(ORACLE_CHUNK);
    let rho = cfg.effective_rho();
    let nu = |k: u32| if k == 0 { 0.0 } else { cfg.scenario.dose_effect(k as usize) };
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, &[channel::REPLICATE, arm, c as u64]);
            let m = ORACLE_CHUNK.min(n - c * ORACLE_CHUNK);
            let (mut s, mut ss) = (0.0, 0.0);
            for _ in 0..m {
                let v = f64::from(u8::from(r.random::<f64>() < 0.5));
                let y0: f64 = r.sample(StandardNormal);
                let z1: f64 = r.sample(StandardNormal);
                let z2: f64 = r.sample(StandardNormal);
                let b_y = cfg.s_y * z1;
                // b^A is drawn for completeness; forced paths make it irrelevant.
                let _b_a = cfg.s_a * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
                let e1: f64 = r.sample(StandardNormal);
                let e2: f64 = r.sample(StandardNormal);
                let d1 = u32::from(path.0);
                let d2 = d1 + u32::from(path.1);
                let y1 = 0.4 - 0.3 * v - 0.1 + nu(d1) + 0.4 * y0 + b_y + DGP_NOISE_SD * e1;
                let y2 = 0.4 - 0.3 * v - 0.2 + nu(d2) + 0.4 * y1 + b_y + DGP_NOISE_SD * e2;
                s += y2;
                ss += y2 * y2;
            }
            (s, ss)
        })
        .collect();
    partial.iter().fold((0.0, 0.0), |(a, b), (s, ss)| (a + s, b + ss))
}

/// Brute-force `E[Y_2(q1)] - E[Y_2(q0)]` from the data-generating equations
/// with forced treatment paths, using independent samples of `n_big`
/// subjects per arm.
pub fn oracle_ate_mc(cfg: &DgpConfig, q1: (u8, u8), q0: (u8, u8), n_big: usize, seed: u64) -> Result<McEstimate> {
    cfg.validate()?;
    for (a1, a2) in [q1, q0] {
        closed_form_ate(a1, a2, cfg.scenario)?;
    }
    if n_big < 10_000 {
        return Err(Error::Config(format!("n_big must be at least 10000, got {n_big}")));
    }
    let n = n_big as f64;
    let (s1, ss1) = forced_arm(cfg, q1, n_big, seed, 1);
    let (s0, ss0) = forced_arm(cfg, q0, n_big, seed, 0);
    let (m1, m0) = (s1 / n, s0 / n);
    let v1 = (ss1 - n * m1 * m1) / (n - 1.0);
    let v0 = (ss0 - n * m0 * m0) / (n - 1.0);
    Ok(McEstimate { estimate: m1 - m0, se: (v1 / n + v0 / n).sqrt() })
}

/// One `(s_A, rho)` point of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub s_a: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub settings: Vec<Setting>,
    pub shat_list: Vec<f64>,
    pub scenario: Scenario,
    pub replicates: usize,
    pub n: usize,
    pub tau: usize,
    pub mcmc: McmcConfig,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            settings: vec![
                Setting { s_a: 0.0, rho: 0.0 },
                Setting { s_a: 0.5, rho: 0.5 },
                Setting { s_a: 1.0, rho: 0.9 },
            ],
            shat_list: vec![0.0, 0.3, 1.0],
            scenario: Scenario::PerDose,
            replicates: 20,
            n: 500,
            tau: 2,
            mcmc: McmcConfig { n_warmup: 1000, n_draws: 1000, ..McmcConfig::default() },
            seed: 0,
        }
    }
}

impl GridSpec {
    /// `(0, 0)` plus `s_A` in `0.1..=1` by 0.1 crossed with `rho` in `0..=0.9` by 0.1.
    pub fn paper_lattice() -> Vec<Setting> {
        let mut out = vec![Setting { s_a: 0.0, rho: 0.0 }];
        for i in 1..=10 {
            for j in 0..=9 {
                out.push(Setting { s_a: f64::from(i) / 10.0, rho: f64::from(j) / 10.0 });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() || self.shat_list.is_empty() {
            return Err(Error::Config("grid needs at least one setting and one posited s_A".into()));
        }
        if self.replicates == 0 || self.n == 0 {
            return Err(Error::Config("replicates and n must be positive".into()));
        }
        if self.tau == 0 {
            return Err(Error::Config("tau must be at least 1".into()));
        }
        for s in &self.settings {
            DgpConfig::new(self.n, s.s_a, s.rho, self.scenario, 0).validate()?;
        }
        for w in self.settings.iter().enumerate().flat_map(|(i, a)| self.settings[i + 1..].iter().map(move |b| (a, b))) {
            if w.0 == w.1 {
                return Err(Error::Config(format!("duplicate setting {:?}", w.0)));
            }
        }
        if self.shat_list.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("posited s_A values must be finite and nonnegative".into()));
        }
        let mut sorted = self.shat_list.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate posited s_A".into()));
        }
        self.mcmc.validate()
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("GridSpec serializes");
        crate::sha256_hex(compact.as_bytes())
    }

    /// Target of every replicate: the effect of always versus never treated at the last step.
    pub fn truth(&self) -> f64 {
        if self.tau == 2 {
            closed_form_ate(1, 1, self.scenario).expect("monotone path")
        } else {
            f64::NAN
        }
    }
}

/// Outcome of one fitted replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub setting: usize,
    pub replicate: usize,
    pub shat_a: f64,
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Aggregates for one `(setting, shat_A)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub s_a: f64,
    pub rho: f64,
    pub shat_a: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub mean_estimate: f64,
    /// Standard error of `mean_estimate` across replicates.
    pub se_estimate: f64,
    pub n_ok: usize,
}

/// `MSE(shat_a) / MSE(reference)` within one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub s_a: f64,
    pub rho: f64,
    pub shat_a: f64,
    pub reference: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellSummary>,
    pub ratios: Vec<RatioRow>,
    pub replicates: Vec<ReplicateOutcome>,
    pub failures: Vec<String>,
    pub attempted: usize,
    pub truth: f64,
}

impl GridResult {
    pub fn cell(&self, s_a: f64, rho: f64, shat_a: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.s_a == s_a && c.rho == rho && c.shat_a == shat_a)
    }
}

fn run_replicate(grid: &GridSpec, si: usize, r: usize) -> Vec<std::result::Result<ReplicateOutcome, String>> {
    let setting = grid.settings[si];
    let data_seed = rng::derive_key(grid.seed, &[channel::REPLICATE, si as u64, r as u64]);
    let cfg = DgpConfig::new(grid.n, setting.s_a, setting.rho, grid.scenario, data_seed);
    let data = match simulate_dgp(&cfg) {
        Ok(d) => d,
        Err(e) => return grid.shat_list.iter().map(|_| Err(e.to_string())).collect(),
    };
    let (base_spec, _) = cfg.as_model();
    grid.shat_list
        .iter()
        .enumerate()
        .map(|(k, &shat)| {
            let spec = base_spec.with_v(shat * shat);
            let mcmc = McmcConfig {
                seed: rng::derive_key(grid.seed, &[channel::SAMPLER, si as u64, r as u64, k as u64]),
                ..grid.mcmc.clone()
            };
            let gseed = rng::derive_key(grid.seed, &[channel::NOISE_PANEL, si as u64, r as u64, k as u64]);
            let samples = fit_mglmm(&data, &spec, &mcmc)
                .and_then(|post| mixed_ate(&data, (Regime::AlwaysTreat, Regime::NeverTreat), grid.tau, &post, spec.v, gseed))
                .map_err(|e| format!("setting {si} replicate {r} shat {shat}: {e}"))?;
            Ok(ReplicateOutcome {
                setting: si,
                replicate: r,
                shat_a: shat,
                mean: linalg::mean(&samples),
                lo95: linalg::quantile(&samples, 0.025),
                hi95: linalg::quantile(&samples, 0.975),
            })
        })
        .collect()
}

/// Runs every `(setting, replicate)` unit: one simulated dataset, then a fit
/// and a mixed-ATE posterior per posited `s_A`. Units are seeded by their
/// grid coordinates, so results do not depend on scheduling.
pub fn run_grid(grid: &GridSpec) -> Result<GridResult> {
    grid.validate()?;
    let units: Vec<(usize, usize)> =
        (0..grid.settings.len()).flat_map(|s| (0..grid.replicates).map(move |r| (s, r))).collect();
    let outcomes: Vec<Vec<std::result::Result<ReplicateOutcome, String>>> = units
        .par_iter()
        .map(|&(s, r)| {
            let out = run_replicate(grid, s, r);
            log::info!("grid unit setting={s} replicate={r} done");
            out
        })
        .collect();
    let attempted = units.len() * grid.shat_list.len();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes.into_iter().flatten() {
        match o {
            Ok(x) => replicates.push(x),
            Err(e) => {
                log::warn!("replicate failed: {e}");
                failures.push(e);
            }
        }
    }
    if failures.len() as f64 > 0.05 * attempted as f64 {
        return Err(Error::Fit(format!("{} of {attempted} replicate fits failed", failures.len())));
    }
    let truth = grid.truth();
    let mut cells = Vec::new();
    for (si, setting) in grid.settings.iter().enumerate() {
        for &shat in &grid.shat_list {
            let rs: Vec<&ReplicateOutcome> = replicates.iter().filter(|x| x.setting == si && x.shat_a == shat).collect();
            let n_ok = rs.len();
            let means: Vec<f64> = rs.iter().map(|x| x.mean).collect();
            let nf = n_ok as f64;
            let mse = rs.iter().map(|x| (x.mean - truth).powi(2)).sum::<f64>() / nf;
            let coverage = rs.iter().filter(|x| x.lo95 < truth && truth < x.hi95).count() as f64 / nf;
            let mean_width = rs.iter().map(|x| x.hi95 - x.lo95).sum::<f64>() / nf;
            let se_estimate = if n_ok > 1 { (linalg::variance(&means) / nf).sqrt() } else { f64::NAN };
            cells.push(CellSummary {
                s_a: setting.s_a,
                rho: setting.rho,
                shat_a: shat,
                mse,
                coverage,
                mean_width,
                mean_estimate: linalg::mean(&means),
                se_estimate,
                n_ok,
            });
        }
    }
    let reference = grid.shat_list.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ratios = Vec::new();
    for setting in &grid.settings {
        let find = |shat: f64| cells.iter().find(|c| c.s_a == setting.s_a && c.rho == setting.rho && c.shat_a == shat);
        let denom = find(reference).map_or(f64::NAN, |c| c.mse);
        for &shat in &grid.shat_list {
            if shat != reference {
                let num = find(shat).map_or(f64::NAN, |c| c.mse);
                ratios.push(RatioRow { s_a: setting.s_a, rho: setting.rho, shat_a: shat, reference, value: num / denom });
            }
        }
    }
    Ok(GridResult { cells, ratios, replicates, failures, attempted, truth })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub version: String,
    pub grid_hash: String,
    pub seed: u64,
    pub attempted: usize,
    pub failures: Vec<String>,
    pub truth: f64,
    pub grid: GridSpec,
}

fn write_table<W: Write>(writer: W, rows: impl Iterator<Item = (f64, f64, f64, f64)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["s_A", "rho", "shat_A", "value"])?;
    for (a, b, c, d) in rows {
        w.write_record([format!("{a}"), format!("{b}"), format!("{c}"), format!("{d}")])?;
    }
    w.flush()?;
    Ok(())
}

impl GridResult {
    /// Writes `grid_mse.csv`, `grid_coverage.csv`, `grid_mse_ratio.csv`,
    /// `grid_replicates.csv` and `grid_manifest.json` into `dir`.
    pub fn write_files(&self, dir: impl AsRef<Path>, grid: &GridSpec) -> Result<()> {
        let dir = dir.as_ref();
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        write_table(open("grid_mse.csv")?, self.cells.iter().map(|c| (c.s_a, c.rho, c.shat_a, c.mse)))?;
        write_table(open("grid_coverage.csv")?, self.cells.iter().map(|c| (c.s_a, c.rho, c.shat_a, c.coverage)))?;
        write_table(open("grid_mse_ratio.csv")?, self.ratios.iter().map(|r| (r.s_a, r.rho, r.shat_a, r.value)))?;
        let mut w = csv::Writer::from_writer(open("grid_replicates.csv")?);
        w.write_record(["s_A", "rho", "shat_A", "replicate", "mean", "lo95", "hi95"])?;
        for x in &self.replicates {
            let s = grid.settings[x.setting];
            w.write_record([
                format!("{}", s.s_a),
                format!("{}", s.rho),
                format!("{}", x.shat_a),
                x.replicate.to_string(),
                format!("{}", x.mean),
                format!("{}", x.lo95),
                format!("{}", x.hi95),
            ])?;
        }
        w.flush()?;
        let manifest = GridManifest {
            version: crate::VERSION.to_string(),
            grid_hash: grid.hash(),
            seed: grid.seed,
            attempted: self.attempted,
            failures: self.failures.clone(),
            truth: self.truth,
            grid: grid.clone(),
        };
        let mut f = open("grid_manifest.json")?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}
