mod common;

use std::collections::BTreeMap;

use common::{random_params, three_channel_spec};
use gcomp_core::gcomputation::{mixed_ate, project_counterfactual, subgroup_contrast, ContrastRequest};
use gcomp_core::heterogeneity::ReffPrior;
use gcomp_core::inference::{McmcConfig, PosteriorDraws};
use gcomp_core::model::{LongDataset, ModelSpec, NoisePanel, ParamsDraw, Regime};
use gcomp_core::rng;
use gcomp_core::simulator::{simulate_dgp, simulate_mglmm, DgpConfig, Scenario};
use gcomp_core::Error;
use proptest::prelude::*;

fn fixed_draws(spec: &ModelSpec, params: Vec<ParamsDraw>) -> PosteriorDraws {
    PosteriorDraws {
        spec: spec.clone(),
        draws: params,
        acceptance: BTreeMap::new(),
        ess: BTreeMap::new(),
        mcmc: McmcConfig::default(),
    }
}

fn dgp_with_truth(s_a: f64, rho: f64, n: usize, draws: usize) -> (LongDataset, PosteriorDraws) {
    let cfg = DgpConfig::new(n, s_a, rho, Scenario::PerDose, 21);
    let data = simulate_dgp(&cfg).unwrap();
    let (spec, truth) = cfg.as_model();
    (data, fixed_draws(&spec, vec![truth; draws]))
}

fn request<'a>(data: &'a LongDataset, draws: &'a PosteriorDraws, q: (Regime, Regime), tau: usize, seed: u64) -> ContrastRequest<'a> {
    ContrastRequest {
        data,
        subgroup: data.subjects.iter().map(|s| (s.id.clone(), 0)).collect(),
        regimes: q,
        tau,
        v: draws.spec.v,
        draws,
        seed,
        keep_trajectories: false,
    }
}

#[test]
fn true_parameters_give_the_design_effects() {
    for (s_a, rho) in [(0.0, 0.0), (0.5, 0.5), (1.0, 0.9)] {
        let (data, draws) = dgp_with_truth(s_a, rho, 60, 5);
        let v = draws.spec.v;
        let always = mixed_ate(&data, (Regime::AlwaysTreat, Regime::NeverTreat), 2, &draws, v, 1).unwrap();
        assert!(always.iter().all(|d| (d - 1.2).abs() < 1e-10), "{always:?}");
        let late = mixed_ate(&data, (Regime::InitiateAt(2), Regime::NeverTreat), 2, &draws, v, 1).unwrap();
        assert!(late.iter().all(|d| (d - 0.5).abs() < 1e-10), "{late:?}");
    }
}

#[test]
fn swapping_regimes_negates_and_identical_regimes_cancel() {
    let (data, draws) = dgp_with_truth(0.5, 0.5, 40, 6);
    let q1 = Regime::InitiateWhenOutcomeAbove(0.3);
    let fwd = subgroup_contrast(&request(&data, &draws, (q1.clone(), Regime::NeverTreat), 3, 8)).unwrap();
    let back = subgroup_contrast(&request(&data, &draws, (Regime::NeverTreat, q1.clone()), 3, 8)).unwrap();
    for (a, b) in fwd.samples.iter().flatten().zip(back.samples.iter().flatten()) {
        assert_eq!(*a, -*b);
    }
    let same = subgroup_contrast(&request(&data, &draws, (q1.clone(), q1), 3, 8)).unwrap();
    assert!(same.samples.iter().flatten().all(|d| *d == 0.0));
    assert!(same.summary.iter().all(|s| s.mean == 0.0 && s.lo95 == 0.0 && s.hi95 == 0.0));
}

#[test]
fn contrasts_are_reproducible_bitwise_and_seed_sensitive() {
    let (data, draws) = dgp_with_truth(0.5, 0.5, 40, 6);
    let q = (Regime::InitiateWhenOutcomeAbove(0.3), Regime::NeverTreat);
    let a = subgroup_contrast(&request(&data, &draws, q.clone(), 2, 8)).unwrap();
    let b = subgroup_contrast(&request(&data, &draws, q.clone(), 2, 8)).unwrap();
    assert_eq!(a.samples, b.samples);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| subgroup_contrast(&request(&data, &draws, q.clone(), 2, 8)).unwrap());
    assert_eq!(a.samples, c.samples);
    let d = subgroup_contrast(&request(&data, &draws, q, 2, 9)).unwrap();
    assert_ne!(a.samples, d.samples);
}

#[test]
fn malformed_requests_are_rejected() {
    let (data, draws) = dgp_with_truth(0.5, 0.5, 10, 2);
    let q = (Regime::AlwaysTreat, Regime::NeverTreat);
    let mut r = request(&data, &draws, q.clone(), 2, 1);
    r.subgroup.clear();
    assert!(matches!(subgroup_contrast(&r), Err(Error::Request(_))));
    let mut r = request(&data, &draws, q.clone(), 2, 1);
    r.subgroup = vec![("nobody".into(), 0)];
    assert!(matches!(subgroup_contrast(&r), Err(Error::Request(_))));
    let mut r = request(&data, &draws, q.clone(), 2, 1);
    r.subgroup = vec![(data.subjects[0].id.clone(), 3)];
    assert!(matches!(subgroup_contrast(&r), Err(Error::Request(_))));
    let mut r = request(&data, &draws, q.clone(), 2, 1);
    r.v = 0.5;
    assert!(matches!(subgroup_contrast(&r), Err(Error::Request(_))));
    assert!(matches!(subgroup_contrast(&request(&data, &draws, q, 0, 1)), Err(Error::Request(_))));
}

#[test]
fn unobserved_outcomes_stay_latent_in_trajectories() {
    let spec = three_channel_spec(0.3);
    let params = random_params(&spec, &mut rng::stream(4, &[]));
    let data = simulate_mglmm(&spec, &params, 3, 2, 4).unwrap();
    let prior = ReffPrior::from_params(&params, &spec).unwrap();
    // A uniform of 1 never falls below the confounder probability.
    let hidden = NoisePanel::constant(1, 3, spec.layout().dynamic_dim(), 1.0);
    let shown = NoisePanel::constant(1, 3, spec.layout().dynamic_dim(), 0.0);
    for s in &data.subjects {
        let t0 = project_counterfactual(s, 1, &Regime::NeverTreat, 3, &params, &prior, &spec, 0.2, &hidden.row(0), 0).unwrap();
        let t1 = project_counterfactual(s, 1, &Regime::NeverTreat, 3, &params, &prior, &spec, 0.2, &shown.row(0), 0).unwrap();
        assert_eq!(t0.intervals, vec![2, 3, 4]);
        assert!(t0.m.iter().all(|m| !m) && t1.m.iter().all(|m| *m));
        assert!(t0.y.iter().all(|y| y.is_finite()));
        // The first step shares its history, so only the confounder indicator differs.
        assert_eq!(t0.y[0], t1.y[0]);
    }
}

#[test]
fn one_step_contrast_is_the_treatment_coefficient_without_random_slope() {
    let mut spec = ModelSpec::simulation_study(0.0);
    spec.outcome_features = vec![
        gcomp_core::model::FeatureTerm::Intercept,
        gcomp_core::model::FeatureTerm::Baseline { index: 0 },
        gcomp_core::model::FeatureTerm::TreatmentIndicator,
        gcomp_core::model::FeatureTerm::LaggedOutcome { fill: 0.0 },
    ];
    spec.validate().unwrap();
    let mut r = rng::stream(33, &[]);
    let draws: Vec<ParamsDraw> = (0..20)
        .map(|_| {
            let mut p = random_params(&spec, &mut r);
            p.g[(0, 0)] = 0.5;
            p
        })
        .collect();
    let data = simulate_mglmm(&spec, &draws[0], 30, 3, 5).unwrap();
    let post = fixed_draws(&spec, draws.clone());
    let mut req = request(&data, &post, (Regime::AlwaysTreat, Regime::NeverTreat), 1, 2);
    req.subgroup = data.subjects.iter().filter(|s| !s.a[2]).map(|s| (s.id.clone(), 2)).collect();
    let res = subgroup_contrast(&req).unwrap();
    for (l, p) in draws.iter().enumerate() {
        assert!((res.samples[0][l] - p.beta_y[2]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn swap_negates_for_random_parameters(seed in 0u64..100_000, threshold in -1.0f64..1.0) {
        let spec = three_channel_spec(0.4);
        let mut r = rng::stream(seed, &[]);
        let draws: Vec<ParamsDraw> = (0..3).map(|_| random_params(&spec, &mut r)).collect();
        let data = simulate_mglmm(&spec, &draws[0], 8, 3, seed).unwrap();
        let post = fixed_draws(&spec, draws);
        let subgroup: Vec<(String, usize)> = data.subjects.iter().map(|s| (s.id.clone(), 1)).collect();
        let q1 = Regime::InitiateWhenOutcomeAbove(threshold);
        let mut fwd = request(&data, &post, (q1.clone(), Regime::NeverTreat), 2, seed);
        fwd.subgroup = subgroup.clone();
        let mut back = request(&data, &post, (Regime::NeverTreat, q1), 2, seed);
        back.subgroup = subgroup;
        let a = subgroup_contrast(&fwd).unwrap();
        let b = subgroup_contrast(&back).unwrap();
        for (x, y) in a.samples.iter().flatten().zip(b.samples.iter().flatten()) {
            prop_assert_eq!(*x, -*y);
        }
    }
}
