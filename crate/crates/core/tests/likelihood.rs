use gcomp_core::inference::{beta_y_conditional, loglik_joint, prepare};
use gcomp_core::model::{LongDataset, ModelSpec, ParamsDraw, SubjectRecord};
use gcomp_core::rng;
use gcomp_core::simulator::{simulate_dgp, DgpConfig, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const LN_2PI: f64 = 1.8378770664093453;

/// Outcome regressors of the study model computed directly from the record.
fn outcome_row(s: &SubjectRecord, t: usize) -> Vec<f64> {
    let dose = s.a[1..=t].iter().filter(|&&a| a).count();
    let ylag = s.y[t - 1].unwrap();
    vec![1.0, s.baseline[0], t as f64, f64::from(u8::from(dose == 1)), f64::from(u8::from(dose == 2)), ylag]
}

fn naive_loglik(data: &LongDataset, p: &ParamsDraw, b: &[Vec<f64>], v: f64) -> f64 {
    let mut total = 0.0;
    for (s, bi) in data.subjects.iter().zip(b) {
        let t_max = s.n_intervals();
        for t in 1..=t_max {
            let x = outcome_row(s, t);
            let mu: f64 = x.iter().zip(&p.beta_y).map(|(a, c)| a * c).sum::<f64>() + bi[0];
            let y = s.y[t].unwrap();
            total += -0.5 * LN_2PI - p.sigma.ln() - 0.5 * ((y - mu) / p.sigma).powi(2);
        }
        for t in 1..=t_max {
            if s.a[t - 1] {
                break;
            }
            let x = [1.0, s.baseline[0], t as f64, s.y[t - 1].unwrap()];
            let mut eta: f64 = x.iter().zip(&p.beta_a).map(|(a, c)| a * c).sum();
            if v > 0.0 {
                eta += bi[1];
            }
            let prob = 1.0 / (1.0 + (-eta).exp());
            total += if s.a[t] { prob.ln() } else { (1.0 - prob).ln() };
        }
    }
    total
}

fn fixture(v: f64, seed: u64) -> (LongDataset, ModelSpec, ParamsDraw, Vec<Vec<f64>>) {
    let cfg = DgpConfig::new(60, 0.5, 0.3, Scenario::PerDose, seed);
    let data = simulate_dgp(&cfg).unwrap();
    let spec = ModelSpec::simulation_study(v);
    let mut r = rng::stream(seed, &[5]);
    let mut p = ParamsDraw::zeros(&spec, 0.45);
    p.beta_y = vec![0.4, -0.3, -0.1, 0.5, 1.0, 0.4];
    p.beta_a = vec![0.1, -0.1, -0.5, -0.35];
    p.g[(0, 0)] = 0.64;
    if v > 0.0 {
        p.g[(0, 1)] = 0.2 * v.sqrt();
        p.g[(1, 0)] = 0.2 * v.sqrt();
    }
    let k = spec.layout().active_dim();
    let b = (0..data.subjects.len()).map(|_| (0..k).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    (data, spec, p, b)
}

#[test]
fn joint_loglik_matches_a_direct_implementation() {
    for (v, seed) in [(0.0, 1), (0.3, 2), (1.0, 3)] {
        let (data, spec, p, b) = fixture(v, seed);
        let got = loglik_joint(&data, &spec, &p, &b).unwrap();
        let want = naive_loglik(&data, &p, &b, v);
        assert!((got - want).abs() < 1e-9 * want.abs(), "v = {v}: {got} vs {want}");
    }
}

#[test]
fn joint_loglik_trivial_cases() {
    let spec = ModelSpec::simulation_study(0.0);
    let mut p = ParamsDraw::zeros(&spec, 1.0);
    p.g[(0, 0)] = 1.0;
    assert_eq!(loglik_joint(&LongDataset { subjects: vec![] }, &spec, &p, &[]).unwrap(), 0.0);

    // One interval, all coefficients zero: N(y; 0, 1) plus log(1/2) for the treatment hazard.
    let s = SubjectRecord { id: "a".into(), baseline: vec![1.0], y: vec![Some(0.0), Some(1.0)], m: vec![true; 2], a: vec![false; 2] };
    let data = LongDataset { subjects: vec![s] };
    let got = loglik_joint(&data, &spec, &p, &[vec![0.0]]).unwrap();
    let want = -0.5 * LN_2PI - 0.5 + 0.5f64.ln();
    assert!((got - want).abs() < 1e-14);

    assert!(loglik_joint(&data, &spec, &p, &[]).is_err());
    assert!(loglik_joint(&data, &spec, &p, &[vec![0.0, 1.0]]).is_err());
}

#[test]
fn outcome_coefficient_conditional_matches_dense_algebra() {
    let (data, spec, p, b) = fixture(0.4, 9);
    let prep = prepare(&data, &spec).unwrap();
    let bv: Vec<DVector<f64>> = b.iter().map(|x| DVector::from_column_slice(x)).collect();
    let prior_sd = 2.5;
    let (mean, cov) = beta_y_conditional(&prep, &bv, p.sigma, prior_sd).unwrap();

    let mut rows = Vec::new();
    let mut resid = Vec::new();
    for (s, bi) in data.subjects.iter().zip(&b) {
        for t in 1..=s.n_intervals() {
            rows.push(outcome_row(s, t));
            resid.push(s.y[t].unwrap() - bi[0]);
        }
    }
    let x = DMatrix::from_fn(rows.len(), 6, |i, j| rows[i][j]);
    let r = DVector::from_vec(resid);
    let s2 = p.sigma * p.sigma;
    let prec = x.transpose() * &x / s2 + DMatrix::identity(6, 6) / (prior_sd * prior_sd);
    let want_cov = prec.try_inverse().unwrap();
    let want_mean = &want_cov * x.transpose() * r / s2;
    assert!((mean - want_mean).amax() < 1e-10);
    assert!((cov - want_cov).amax() < 1e-10);
}
