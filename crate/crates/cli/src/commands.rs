//! Command implementations. Each resolves its configuration, writes its
//! outputs into the output directory and finishes with `manifest.json`.

use std::fs;
use std::path::Path;

use anyhow::Context;
use gcomp_core::gcomputation::{subgroup_contrast, ContrastRequest};
use gcomp_core::inference::{fit_mglmm, PosteriorDraws};
use gcomp_core::model::{validate_dataset, LongDataset, ModelSpec, Regime};
use gcomp_core::rng::{self, channel};
use gcomp_core::simulator::{simulate_dgp, simulate_mglmm, DgpConfig, DGP_INTERVALS};
use gcomp_core::study::{closed_form_ate, run_grid, GridSpec};
use serde_json::json;

use crate::config::{
    load, load_spec, parse_scenario, require_out, EstimateConfig, FitConfig, ReplicateConfig, SimulateConfig,
    UsageError, ValidateConfig,
};
use crate::manifest::RunManifest;
use crate::{EstimateArgs, FitArgs, ReplicateArgs, SimulateArgs, ValidateArgs};

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn read_dataset(path: Option<&Path>) -> anyhow::Result<LongDataset> {
    let path = path.ok_or_else(|| UsageError::new("a dataset is required (--data)"))?;
    if !path.is_file() {
        return Err(UsageError::new(format!("dataset not found: {}", path.display())).into());
    }
    LongDataset::read_csv_path(path).with_context(|| format!("reading dataset {}", path.display()))
}

pub fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut c: SimulateConfig = load(a.config.as_deref())?;
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(s) = a.s_a {
        c.s_a = s;
    }
    if let Some(r) = a.rho {
        c.rho = r;
    }
    if let Some(s) = &a.scenario {
        c.scenario = parse_scenario(s)?;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    if a.dgp {
        c.mglmm = None;
    }
    let out = require_out(&c.out)?;

    let truth = match &c.mglmm {
        None => {
            let cfg = DgpConfig::new(c.n, c.s_a, c.rho, c.scenario, c.seed);
            cfg.validate()?;
            if c.s_a == 0.0 && c.rho != 0.0 {
                log::warn!("rho = {} is ignored because sA = 0", c.rho);
            }
            let data = simulate_dgp(&cfg)?;
            data.write_csv_path(out.join("data.csv"))?;
            let (spec, params) = cfg.as_model();
            json!({
                "design": "dgp",
                "n": c.n,
                "intervals": DGP_INTERVALS,
                "s_a": c.s_a,
                "rho": cfg.effective_rho(),
                "scenario": c.scenario,
                "ate_always_vs_never": closed_form_ate(1, 1, c.scenario)?,
                "spec": spec,
                "truth": params,
            })
        }
        Some(m) => {
            let data = simulate_mglmm(&m.spec, &m.truth, c.n, m.intervals, c.seed)?;
            data.write_csv_path(out.join("data.csv"))?;
            json!({
                "design": "mglmm",
                "n": c.n,
                "intervals": m.intervals,
                "spec": m.spec,
                "truth": m.truth,
            })
        }
    };
    write_json(&out, "truth.json", &truth)?;
    let mut manifest = RunManifest::new("simulate", &c, Some(c.seed))?;
    manifest.record(&out, "data.csv")?;
    manifest.record(&out, "truth.json")?;
    manifest.write(&out)?;
    log::info!("simulated {} subjects into {}", c.n, out.display());
    Ok(())
}

pub fn fit(a: FitArgs) -> anyhow::Result<()> {
    let mut c: FitConfig = load(a.config.as_deref())?;
    if a.data.is_some() {
        c.data = a.data;
    }
    if let Some(p) = &a.spec {
        c.spec = Some(load_spec(p)?);
    }
    if a.v.is_some() {
        c.v = a.v;
    }
    if let Some(w) = a.warmup {
        c.mcmc.n_warmup = w;
    }
    if let Some(d) = a.draws {
        c.mcmc.n_draws = d;
    }
    if let Some(t) = a.thin {
        c.mcmc.thin = t;
    }
    if let Some(s) = a.seed {
        c.mcmc.seed = s;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    let v = c.v.or_else(|| c.spec.as_ref().map(|s| s.v)).unwrap_or(0.0);
    let spec = match &c.spec {
        Some(s) => s.with_v(v),
        None => ModelSpec::simulation_study(v),
    };
    spec.validate()?;
    c.mcmc.validate()?;
    c.spec = Some(spec.clone());
    c.v = Some(v);
    let data = read_dataset(c.data.as_deref())?;
    let out = require_out(&c.out)?;

    let post = fit_mglmm(&data, &spec, &c.mcmc)?;
    post.write_files(out.join("draws.csv"), out.join("draws_manifest.json"))?;
    println!("v = {v}, treatment block active = {}", spec.layout().treatment_active);
    for (block, rate) in &post.acceptance {
        println!("acceptance {block:<22} {rate:.3}");
    }
    if let Some(min_ess) = post.ess.values().copied().reduce(f64::min) {
        println!("minimum ESS {min_ess:.1} over {} draws", post.len());
    }
    let mut manifest = RunManifest::new("fit", &c, Some(c.mcmc.seed))?;
    manifest.record(&out, "draws.csv")?;
    manifest.record(&out, "draws_manifest.json")?;
    manifest.write(&out)?;
    Ok(())
}

fn read_subgroup(path: &Path) -> anyhow::Result<Vec<(String, usize)>> {
    if !path.is_file() {
        return Err(UsageError::new(format!("subgroup file not found: {}", path.display())).into());
    }
    let mut r = csv::Reader::from_path(path).map_err(gcomp_core::Error::from)?;
    let headers: Vec<String> = r.headers().map_err(gcomp_core::Error::from)?.iter().map(str::to_string).collect();
    if headers != ["id", "h"] {
        return Err(UsageError::new(format!("subgroup file {} must have header id,h", path.display())).into());
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(gcomp_core::Error::from)?;
        let h = rec[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| UsageError::new(format!("subgroup file: bad interval {:?} for id {}", &rec[1], &rec[0])))?;
        out.push((rec[0].trim().to_string(), h));
    }
    Ok(out)
}

fn stem_for(v: f64) -> String {
    format!("contrast_v{v}")
}

pub fn estimate(a: EstimateArgs) -> anyhow::Result<()> {
    let mut c: EstimateConfig = load(a.config.as_deref())?;
    if a.data.is_some() {
        c.data = a.data;
    }
    if let Some(p) = &a.spec {
        c.spec = Some(load_spec(p)?);
    }
    if a.posterior.is_some() {
        c.posterior = a.posterior;
    }
    if let Some(vl) = a.vlist.clone() {
        c.vlist = vl;
    }
    if let Some(r) = a.regimes {
        if r.len() != 2 {
            return Err(UsageError::new("--regimes takes exactly two comma-separated regimes").into());
        }
        c.regimes = (r[0].clone(), r[1].clone());
    }
    if let Some(t) = a.tau {
        c.tau = t;
    }
    if a.subgroup.is_some() {
        c.subgroup = a.subgroup;
    }
    if let Some(w) = a.warmup {
        c.mcmc.n_warmup = w;
    }
    if let Some(d) = a.draws {
        c.mcmc.n_draws = d;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    let regimes: (Regime, Regime) = (c.regimes.0.parse()?, c.regimes.1.parse()?);
    if c.tau == 0 {
        return Err(UsageError::new("tau must be at least 1").into());
    }
    let existing = match &c.posterior {
        Some(dir) => {
            let (csv, man) = (dir.join("draws.csv"), dir.join("draws_manifest.json"));
            if !csv.is_file() || !man.is_file() {
                return Err(UsageError::new(format!("no fitted posterior in {}", dir.display())).into());
            }
            let draws = PosteriorDraws::read_files(&csv, &man)?;
            if a.vlist.is_some() && c.vlist != [draws.spec.v] {
                return Err(UsageError::new(format!(
                    "the posterior in {} was fitted with v = {}; --vlist cannot ask for other values",
                    dir.display(),
                    draws.spec.v
                ))
                .into());
            }
            c.vlist = vec![draws.spec.v];
            c.spec = Some(draws.spec.clone());
            Some(draws)
        }
        None => None,
    };
    if c.vlist.is_empty() {
        return Err(UsageError::new("vlist is empty").into());
    }
    let mut sorted = c.vlist.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(UsageError::new("vlist has duplicate values").into());
    }
    if existing.is_none() {
        c.mcmc.validate()?;
    }
    let base_spec = c.spec.clone().unwrap_or_else(|| ModelSpec::simulation_study(0.0));
    for &v in &c.vlist {
        base_spec.with_v(v).validate()?;
    }
    let data = read_dataset(c.data.as_deref())?;
    let subgroup = match &c.subgroup {
        Some(p) => read_subgroup(p)?,
        None => data.subjects.iter().map(|s| (s.id.clone(), 0)).collect(),
    };
    let out = require_out(&c.out)?;
    let gseed = rng::derive_key(c.seed, &[channel::NOISE_PANEL]);

    let mut manifest = RunManifest::new("estimate", &c, Some(c.seed))?;
    for &v in &c.vlist {
        let draws = match &existing {
            Some(d) => d.clone(),
            None => {
                let mcmc = gcomp_core::inference::McmcConfig {
                    seed: rng::derive_key(c.seed, &[channel::SAMPLER, v.to_bits()]),
                    ..c.mcmc.clone()
                };
                log::info!("fitting at v = {v}");
                fit_mglmm(&data, &base_spec.with_v(v), &mcmc)?
            }
        };
        let req = ContrastRequest {
            data: &data,
            subgroup: subgroup.clone(),
            regimes: regimes.clone(),
            tau: c.tau,
            v,
            draws: &draws,
            seed: gseed,
            keep_trajectories: false,
        };
        let res = subgroup_contrast(&req)?;
        let stem = stem_for(v);
        res.write_files(&out, &stem)?;
        for suffix in ["draws.csv", "summary.csv", "manifest.json"] {
            manifest.record(&out, &format!("{stem}_{suffix}"))?;
        }
        for s in &res.summary {
            println!("v = {v:<6} j = {} mean {:+.4} 95% [{:+.4}, {:+.4}]", s.j, s.mean, s.lo95, s.hi95);
        }
    }
    manifest.write(&out)?;
    Ok(())
}

pub fn replicate(a: ReplicateArgs) -> anyhow::Result<()> {
    let mut c: ReplicateConfig = load(a.config.as_deref())?;
    if a.lattice {
        c.grid.settings = GridSpec::paper_lattice();
    }
    if let Some(s) = a.shat {
        c.grid.shat_list = s;
    }
    if let Some(s) = &a.scenario {
        c.grid.scenario = parse_scenario(s)?;
    }
    if let Some(r) = a.replicates {
        c.grid.replicates = r;
    }
    if let Some(n) = a.n {
        c.grid.n = n;
    }
    if let Some(w) = a.warmup {
        c.grid.mcmc.n_warmup = w;
    }
    if let Some(d) = a.draws {
        c.grid.mcmc.n_draws = d;
    }
    if let Some(s) = a.seed {
        c.grid.seed = s;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    c.grid.validate()?;
    let out = require_out(&c.out)?;
    log::info!(
        "grid: {} settings x {} posited values x {} replicates",
        c.grid.settings.len(),
        c.grid.shat_list.len(),
        c.grid.replicates
    );
    let res = run_grid(&c.grid)?;
    res.write_files(&out, &c.grid)?;
    println!("{:>5} {:>5} {:>6} {:>9} {:>8} {:>8} {:>4}", "s_A", "rho", "shat_A", "mse", "coverage", "width", "ok");
    for cell in &res.cells {
        println!(
            "{:>5} {:>5} {:>6} {:>9.5} {:>8.3} {:>8.4} {:>4}",
            cell.s_a, cell.rho, cell.shat_a, cell.mse, cell.coverage, cell.mean_width, cell.n_ok
        );
    }
    if !res.failures.is_empty() {
        println!("{} of {} replicate fits failed", res.failures.len(), res.attempted);
    }
    let mut manifest = RunManifest::new("replicate", &c, Some(c.grid.seed))?;
    for name in ["grid_mse.csv", "grid_coverage.csv", "grid_mse_ratio.csv", "grid_replicates.csv", "grid_manifest.json"] {
        manifest.record(&out, name)?;
    }
    manifest.write(&out)?;
    Ok(())
}

pub fn validate(a: ValidateArgs) -> anyhow::Result<()> {
    let mut c: ValidateConfig = load(a.config.as_deref())?;
    if a.data.is_some() {
        c.data = a.data;
    }
    if let Some(p) = &a.spec {
        c.spec = Some(load_spec(p)?);
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    let spec = c.spec.clone().unwrap_or_else(|| ModelSpec::simulation_study(0.0));
    spec.validate()?;
    c.spec = Some(spec.clone());
    let data = read_dataset(c.data.as_deref())?;
    let report = validate_dataset(&data, &spec);
    if let Some(out) = &c.out {
        let out = require_out(&Some(out.clone()))?;
        write_json(&out, "validation.json", &report)?;
        let mut manifest = RunManifest::new("validate", &c, None)?;
        manifest.record(&out, "validation.json")?;
        manifest.write(&out)?;
    }
    if report.is_empty() {
        println!("{} subjects, no issues", data.subjects.len());
        Ok(())
    } else {
        print!("{report}");
        Err(UsageError::new(format!("dataset has {} issue(s)", report.issues.len())).into())
    }
}
