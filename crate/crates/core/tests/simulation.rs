use gcomp_core::model::LongDataset;
use gcomp_core::simulator::{simulate_dgp, simulate_dgp_detailed, simulate_mglmm, DgpConfig, Scenario};
use proptest::prelude::*;

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn outcomes(data: &LongDataset, t: usize) -> Vec<f64> {
    data.subjects.iter().map(|s| s.y[t].unwrap()).collect()
}

fn treated_share(data: &LongDataset, t: usize) -> f64 {
    data.subjects.iter().filter(|s| s.a[t]).count() as f64 / data.subjects.len() as f64
}

#[test]
fn joint_model_simulator_reproduces_the_study_design_in_distribution() {
    let n = 6000;
    let cfg = DgpConfig::new(n, 0.8, 0.6, Scenario::PerDose, 101);
    let dgp = simulate_dgp(&cfg).unwrap();
    let (spec, truth) = cfg.as_model();
    let joint = simulate_mglmm(&spec, &truth, n, 2, 202).unwrap();
    // Two-sample KS critical value at level 0.001.
    let crit = 1.95 * (2.0 / n as f64).sqrt();
    for t in 1..=2 {
        let d = ks_statistic(&outcomes(&dgp, t), &outcomes(&joint, t));
        assert!(d < crit, "Y_{t}: KS {d} >= {crit}");
        let (p, q) = (treated_share(&dgp, t), treated_share(&joint, t));
        let se = (p * (1.0 - p) * 2.0 / n as f64).sqrt();
        assert!((p - q).abs() < 4.0 * se, "A_{t}: {p} vs {q}");
    }
}

#[test]
fn simulation_is_reproducible_and_seed_sensitive() {
    let cfg = DgpConfig::new(100, 0.5, 0.5, Scenario::PerDose, 3);
    let a = simulate_dgp(&cfg).unwrap();
    assert_eq!(a, simulate_dgp(&cfg).unwrap());
    let mut buf_a = Vec::new();
    let mut buf_b = Vec::new();
    a.write_csv(&mut buf_a).unwrap();
    simulate_dgp(&cfg).unwrap().write_csv(&mut buf_b).unwrap();
    assert_eq!(buf_a, buf_b);
    let other = simulate_dgp(&DgpConfig::new(100, 0.5, 0.5, Scenario::PerDose, 4)).unwrap();
    assert_ne!(a, other);
}

#[test]
fn random_effects_have_the_requested_covariance() {
    let cfg = DgpConfig::new(40_000, 0.7, -0.4, Scenario::Null, 9);
    let s = simulate_dgp_detailed(&cfg).unwrap();
    let n = s.effects.len() as f64;
    let (mut syy, mut saa, mut sya) = (0.0, 0.0, 0.0);
    for [y, a] in &s.effects {
        syy += y * y;
        saa += a * a;
        sya += y * a;
    }
    let g = cfg.g();
    assert!((syy / n - g[(0, 0)]).abs() < 0.03);
    assert!((saa / n - g[(1, 1)]).abs() < 0.03);
    assert!((sya / n - g[(0, 1)]).abs() < 0.02);
}

#[test]
fn zero_treatment_sd_ignores_rho() {
    let a = simulate_dgp(&DgpConfig::new(200, 0.0, 0.0, Scenario::PerDose, 1)).unwrap();
    let b = simulate_dgp(&DgpConfig::new(200, 0.0, 0.7, Scenario::PerDose, 1)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulated_paths_are_monotone_and_complete(seed in 0u64..1_000_000, s_a in 0.0f64..1.0, rho in -0.9f64..0.9) {
        let data = simulate_dgp(&DgpConfig::new(30, s_a, rho, Scenario::PerDose, seed)).unwrap();
        for s in &data.subjects {
            prop_assert_eq!(s.a.len(), 3);
            prop_assert!(!s.a[0]);
            prop_assert!(s.a.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(s.y.iter().all(|y| y.is_some_and(f64::is_finite)));
        }
    }
}
