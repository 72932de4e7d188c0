mod common;

use common::{mean, sd};
use gcomp_core::inference::{fit_mglmm, glm, prepare, McmcConfig, PosteriorDraws};
use gcomp_core::model::ModelSpec;
use gcomp_core::simulator::{simulate_dgp, DgpConfig, Scenario};

fn column(post: &PosteriorDraws, name: &str) -> Vec<f64> {
    post.column(name).unwrap_or_else(|| panic!("no column {name}"))
}

/// Monte Carlo standard error of a chain mean.
fn mcse(post: &PosteriorDraws, name: &str) -> f64 {
    let xs = column(post, name);
    sd(&xs) / post.ess[name].sqrt()
}

#[test]
fn same_seed_gives_identical_draws() {
    let data = simulate_dgp(&DgpConfig::new(80, 0.5, 0.5, Scenario::PerDose, 4)).unwrap();
    let spec = ModelSpec::simulation_study(0.25);
    let mcmc = McmcConfig::new(100, 100, 11);
    let a = fit_mglmm(&data, &spec, &mcmc).unwrap();
    let b = fit_mglmm(&data, &spec, &mcmc).unwrap();
    assert_eq!(a, b);
    let c = fit_mglmm(&data, &spec, &McmcConfig::new(100, 100, 12)).unwrap();
    assert_ne!(a.draws, c.draws);
}

#[test]
fn draws_respect_the_covariance_constraints() {
    let data = simulate_dgp(&DgpConfig::new(150, 0.5, 0.5, Scenario::PerDose, 5)).unwrap();
    for v in [0.0, 0.09, 1.0] {
        let spec = ModelSpec::simulation_study(v);
        let post = fit_mglmm(&data, &spec, &McmcConfig::new(150, 150, 3)).unwrap();
        assert_eq!(post.len(), 150);
        for d in &post.draws {
            d.validate(&spec).unwrap();
            assert_eq!(d.g[(1, 1)], v);
            assert!(d.g.clone().symmetric_eigenvalues().iter().all(|e| *e >= -1e-12));
            if v == 0.0 {
                assert_eq!((d.g[(0, 1)], d.g[(1, 0)]), (0.0, 0.0));
            }
            assert!(d.sigma > 0.0);
        }
        assert_eq!(post.manifest().treatment_block_active, v > 0.0);
    }
}

#[test]
fn independent_chains_agree() {
    let data = simulate_dgp(&DgpConfig::new(300, 0.5, 0.5, Scenario::PerDose, 6)).unwrap();
    let spec = ModelSpec::simulation_study(0.25);
    let a = fit_mglmm(&data, &spec, &McmcConfig::new(600, 1200, 1)).unwrap();
    let b = fit_mglmm(&data, &spec, &McmcConfig::new(600, 1200, 2)).unwrap();
    for name in ["beta_y_1", "beta_y_4", "beta_y_5", "beta_y_6", "sigma", "beta_a_3", "g_1_1"] {
        let (ma, mb) = (mean(&column(&a, name)), mean(&column(&b, name)));
        let se = (mcse(&a, name).powi(2) + mcse(&b, name).powi(2)).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "{name}: {ma} vs {mb} (se {se})");
    }
}

#[test]
fn treatment_coefficients_at_zero_v_match_penalized_logistic_regression() {
    let data = simulate_dgp(&DgpConfig::new(500, 0.0, 0.0, Scenario::PerDose, 8)).unwrap();
    let spec = ModelSpec::simulation_study(0.0);
    let post = fit_mglmm(&data, &spec, &McmcConfig::new(500, 1500, 4)).unwrap();
    let prep = prepare(&data, &spec).unwrap();
    let ml = glm::logistic(prep.iter().map(|s| &s.treatment), spec.priors.coef_sd, "treatment").unwrap();
    for j in 0..4 {
        let name = format!("beta_a_{}", j + 1);
        let xs = column(&post, &name);
        let (m, s) = (mean(&xs), sd(&xs));
        assert!((m - ml.coef[j]).abs() < 0.2 * s + 4.0 * mcse(&post, &name), "{name}: {m} vs {}", ml.coef[j]);
        let asym = ml.cov[(j, j)].sqrt();
        assert!((s / asym - 1.0).abs() < 0.2, "{name}: sd {s} vs {asym}");
    }
}

#[test]
fn posterior_covers_the_generating_outcome_coefficients() {
    let cfg = DgpConfig::new(500, 0.5, 0.5, Scenario::PerDose, 10);
    let data = simulate_dgp(&cfg).unwrap();
    let (spec, truth) = cfg.as_model();
    let post = fit_mglmm(&data, &spec, &McmcConfig::new(800, 800, 5)).unwrap();
    for (j, want) in truth.beta_y.iter().enumerate() {
        let xs = column(&post, &format!("beta_y_{}", j + 1));
        assert!((mean(&xs) - want).abs() < 4.0 * sd(&xs), "beta_y_{}: {} vs {want}", j + 1, mean(&xs));
    }
    let s = column(&post, "sigma");
    assert!((mean(&s) - truth.sigma).abs() < 4.0 * sd(&s));
    let g11 = column(&post, "g_1_1");
    assert!((mean(&g11) - truth.g[(0, 0)]).abs() < 4.0 * sd(&g11));
}

#[test]
fn draws_round_trip_through_files() {
    let data = simulate_dgp(&DgpConfig::new(50, 0.3, 0.0, Scenario::Null, 1)).unwrap();
    let spec = ModelSpec::simulation_study(0.09);
    let post = fit_mglmm(&data, &spec, &McmcConfig::new(50, 40, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv, man) = (dir.path().join("d.csv"), dir.path().join("d.json"));
    post.write_files(&csv, &man).unwrap();
    let back = PosteriorDraws::read_files(&csv, &man).unwrap();
    assert_eq!(back.draws, post.draws);
    assert_eq!(back.spec, post.spec);
}

#[test]
fn invalid_inputs_are_rejected_before_sampling() {
    let mut data = simulate_dgp(&DgpConfig::new(20, 0.0, 0.0, Scenario::PerDose, 1)).unwrap();
    let spec = ModelSpec::simulation_study(0.0);
    assert!(matches!(
        fit_mglmm(&data, &spec, &McmcConfig::new(10, 0, 1)),
        Err(gcomp_core::Error::Config(_))
    ));
    let s = &mut data.subjects[0];
    s.a = vec![false, true, false];
    assert!(matches!(fit_mglmm(&data, &spec, &McmcConfig::new(10, 10, 1)), Err(gcomp_core::Error::Data(_))));
}
