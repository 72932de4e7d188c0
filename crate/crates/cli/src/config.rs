//! JSON run configurations. Unknown keys are rejected; command-line flags
//! override the file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use gcomp_core::model::{ModelSpec, ParamsDraw};
use gcomp_core::simulator::Scenario;
use gcomp_core::study::GridSpec;
use gcomp_core::inference::McmcConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A configuration or invocation problem (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Reads `path` as `T`, or returns the default when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| UsageError::new(format!("config {}: {e}", path.display())).into())
}

pub fn load_spec(path: &Path) -> anyhow::Result<ModelSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
    Ok(ModelSpec::from_json(&text)?)
}

pub fn parse_scenario(s: &str) -> anyhow::Result<Scenario> {
    Ok(s.parse::<Scenario>()?)
}

pub fn require_out(out: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let out = out.clone().ok_or_else(|| UsageError::new("an output directory is required (--out)"))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

/// Joint-model simulation with explicit parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MglmmSimulation {
    pub spec: ModelSpec,
    pub truth: ParamsDraw,
    pub intervals: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n: usize,
    pub s_a: f64,
    pub rho: f64,
    pub scenario: Scenario,
    pub seed: u64,
    /// When set (and `--dgp` is not given), simulate from this model instead of the study design.
    pub mglmm: Option<MglmmSimulation>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n: 500, s_a: 0.0, rho: 0.0, scenario: Scenario::PerDose, seed: 0, mglmm: None, out: None }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    /// Model specification; the study design model when absent.
    pub spec: Option<ModelSpec>,
    pub v: Option<f64>,
    pub mcmc: McmcConfig,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub data: Option<PathBuf>,
    pub spec: Option<ModelSpec>,
    /// Directory written by `fit`.
    pub posterior: Option<PathBuf>,
    pub vlist: Vec<f64>,
    pub regimes: (String, String),
    pub tau: usize,
    pub subgroup: Option<PathBuf>,
    /// Sampler settings for refits; the seed is derived from `seed`.
    pub mcmc: McmcConfig,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            data: None,
            spec: None,
            posterior: None,
            vlist: vec![0.0],
            regimes: ("always".into(), "never".into()),
            tau: 2,
            subgroup: None,
            mcmc: McmcConfig::default(),
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplicateConfig {
    pub grid: GridSpec,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub data: Option<PathBuf>,
    pub spec: Option<ModelSpec>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}
