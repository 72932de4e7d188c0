//! Sampler configuration, stored posterior draws and their file formats.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamsDraw};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub thin: usize,
    pub seed: u64,
    /// Acceptance target for scalar Metropolis blocks.
    pub target_scalar: f64,
    /// Acceptance target for vector Metropolis blocks.
    pub target_vector: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_warmup: 2000,
            n_draws: 2000,
            thin: 1,
            seed: 0,
            target_scalar: 0.44,
            target_vector: 0.234,
        }
    }
}

impl McmcConfig {
    pub fn new(n_warmup: usize, n_draws: usize, seed: u64) -> Self {
        Self { n_warmup, n_draws, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        for (name, t) in [("target_scalar", self.target_scalar), ("target_vector", self.target_vector)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        Ok(())
    }
}

/// Posterior draws of the population parameters with sampler diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub draws: Vec<ParamsDraw>,
    /// Acceptance rate of each Metropolis block over the retained iterations.
    pub acceptance: BTreeMap<String, f64>,
    /// Effective sample size of every stored scalar.
    pub ess: BTreeMap<String, f64>,
    pub mcmc: McmcConfig,
}

/// Sidecar written next to the draws CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawsManifest {
    pub version: String,
    pub spec_hash: String,
    pub seed: u64,
    pub v: f64,
    pub treatment_block_active: bool,
    pub n_draws: usize,
    pub mcmc: McmcConfig,
    pub acceptance: BTreeMap<String, f64>,
    pub ess: BTreeMap<String, f64>,
    pub spec: ModelSpec,
}

/// CSV column names for draws under `spec`.
pub fn column_names(spec: &ModelSpec) -> Vec<String> {
    let mut cols = Vec::new();
    cols.extend((1..=spec.outcome_features.len()).map(|i| format!("beta_y_{i}")));
    cols.push("sigma".into());
    cols.extend((1..=spec.confounder_features.len()).map(|i| format!("beta_m_{i}")));
    cols.extend((1..=spec.treatment_features.len()).map(|i| format!("beta_a_{i}")));
    let k = spec.layout().full_dim();
    for i in 1..=k {
        for j in 1..=i {
            cols.push(format!("g_{i}_{j}"));
        }
    }
    cols
}

pub(crate) fn flatten(d: &ParamsDraw) -> Vec<f64> {
    let mut row = d.beta_y.clone();
    row.push(d.sigma);
    row.extend_from_slice(&d.beta_m);
    row.extend_from_slice(&d.beta_a);
    row.extend(d.g_lower());
    row
}

fn unflatten(spec: &ModelSpec, row: &[f64]) -> ParamsDraw {
    let (py, pm, pa) = (spec.outcome_features.len(), spec.confounder_features.len(), spec.treatment_features.len());
    let k = spec.layout().full_dim();
    let mut g = DMatrix::zeros(k, k);
    let mut idx = py + 1 + pm + pa;
    for i in 0..k {
        for j in 0..=i {
            g[(i, j)] = row[idx];
            g[(j, i)] = row[idx];
            idx += 1;
        }
    }
    ParamsDraw {
        beta_y: row[..py].to_vec(),
        sigma: row[py],
        beta_m: row[py + 1..py + 1 + pm].to_vec(),
        beta_a: row[py + 1 + pm..py + 1 + pm + pa].to_vec(),
        g,
    }
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Values of one named column across draws.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = column_names(&self.spec).iter().position(|c| c == name)?;
        Some(self.draws.iter().map(|d| flatten(d)[idx]).collect())
    }

    pub fn manifest(&self) -> DrawsManifest {
        DrawsManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec_hash: self.spec.hash(),
            seed: self.mcmc.seed,
            v: self.spec.v,
            treatment_block_active: self.spec.layout().treatment_active,
            n_draws: self.draws.len(),
            mcmc: self.mcmc.clone(),
            acceptance: self.acceptance.clone(),
            ess: self.ess.clone(),
            spec: self.spec.clone(),
        }
    }

    /// One row per draw; floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["draw".to_string()];
        header.extend(column_names(&self.spec));
        w.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(flatten(d).iter().map(|x| format!("{x}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the CSV and its JSON manifest.
    pub fn write_files(&self, csv_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(csv_path)?))?;
        let mut f = BufWriter::new(File::create(manifest_path)?);
        serde_json::to_writer_pretty(&mut f, &self.manifest())?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, manifest: &DrawsManifest) -> Result<Self> {
        let spec = manifest.spec.clone();
        let cols = column_names(&spec);
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("draw") || header[1..] != cols[..] {
            return Err(Error::Data("posterior CSV columns do not match the manifest spec".into()));
        }
        let mut draws = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|e| Error::Data(format!("bad posterior value {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            let d = unflatten(&spec, &row);
            d.validate(&spec)?;
            draws.push(d);
        }
        if draws.is_empty() {
            return Err(Error::Data("posterior CSV has no draws".into()));
        }
        Ok(Self {
            spec,
            draws,
            acceptance: manifest.acceptance.clone(),
            ess: manifest.ess.clone(),
            mcmc: manifest.mcmc.clone(),
        })
    }

    pub fn read_files(csv_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest: DrawsManifest = serde_json::from_reader(BufReader::new(File::open(manifest_path)?))?;
        manifest.spec.validate()?;
        if manifest.spec.hash() != manifest.spec_hash {
            return Err(Error::Data("manifest spec hash does not match its spec".into()));
        }
        Self::read_csv(BufReader::new(File::open(csv_path)?), &manifest)
    }
}

/// Effective sample size by Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var0 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var0 <= 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - lag {
            s += (x[i] - mean) * (x[i + lag] - mean);
        }
        s / n as f64 / var0
    };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}
