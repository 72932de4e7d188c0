use gcomp_core::simulator::{DgpConfig, Scenario};
use gcomp_core::study::{closed_form_ate, oracle_ate_mc, run_grid, GridSpec, Setting};
use gcomp_core::inference::McmcConfig;

const PATHS: [(u8, u8); 3] = [(0, 0), (0, 1), (1, 1)];

#[test]
fn oracle_agrees_with_closed_form_for_every_monotone_pair() {
    for scenario in [Scenario::PerDose, Scenario::Null] {
        let cfg = DgpConfig::new(1, 0.5, 0.5, scenario, 0);
        for (k, &q1) in PATHS.iter().enumerate() {
            for &q0 in &PATHS[..k] {
                let want = closed_form_ate(q1.0, q1.1, scenario).unwrap() - closed_form_ate(q0.0, q0.1, scenario).unwrap();
                let got = oracle_ate_mc(&cfg, q1, q0, 200_000, 17).unwrap();
                assert!((got.estimate - want).abs() < 3.0 * got.se, "{scenario:?} {q1:?} vs {q0:?}: {got:?} vs {want}");
            }
        }
    }
}

#[test]
fn oracle_does_not_depend_on_the_confounding_strength() {
    let cfg = DgpConfig::new(1, 1.0, 0.9, Scenario::PerDose, 0);
    let got = oracle_ate_mc(&cfg, (1, 1), (0, 0), 200_000, 5).unwrap();
    assert!((got.estimate - 1.2).abs() < 3.0 * got.se, "{got:?}");
}

#[test]
fn oracle_rejects_bad_requests() {
    let cfg = DgpConfig::new(1, 0.5, 0.5, Scenario::PerDose, 0);
    assert!(oracle_ate_mc(&cfg, (1, 0), (0, 0), 20_000, 1).is_err());
    assert!(oracle_ate_mc(&cfg, (1, 1), (0, 0), 100, 1).is_err());
}

fn tiny_grid() -> GridSpec {
    GridSpec {
        settings: vec![Setting { s_a: 0.0, rho: 0.0 }, Setting { s_a: 0.5, rho: 0.5 }],
        shat_list: vec![0.0, 0.5, 1.0],
        replicates: 2,
        n: 60,
        mcmc: McmcConfig::new(60, 60, 0),
        seed: 3,
        ..GridSpec::default()
    }
}

#[test]
fn grid_is_independent_of_worker_count_and_emits_complete_tables() {
    let grid = tiny_grid();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_grid(&grid)).unwrap();
    let b = many.install(|| run_grid(&grid)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 6);
    assert_eq!(a.ratios.len(), 4);
    assert!(a.ratios.iter().all(|r| r.reference == 1.0));
    for c in &a.cells {
        assert!((0.0..=1.0).contains(&c.coverage) && c.mse >= 0.0 && c.n_ok == 2);
    }

    let dir = tempfile::tempdir().unwrap();
    a.write_files(dir.path(), &grid).unwrap();
    for (name, rows) in [("grid_mse.csv", 6), ("grid_coverage.csv", 6), ("grid_mse_ratio.csv", 4), ("grid_replicates.csv", 12)] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        if name != "grid_replicates.csv" {
            assert_eq!(header, "s_A,rho,shat_A,value");
        }
        let body: Vec<&str> = lines.collect();
        assert_eq!(body.len(), rows, "{name}");
        let keys: std::collections::BTreeSet<String> = body.iter().map(|l| l.rsplitn(2, ',').nth(1).unwrap().to_string()).collect();
        if name != "grid_replicates.csv" {
            assert_eq!(keys.len(), rows, "{name} has duplicate keys");
        }
    }
    assert!(dir.path().join("grid_manifest.json").is_file());
}

#[test]
fn single_setting_single_replicate_gives_one_row_per_posited_value() {
    let grid = GridSpec { settings: vec![Setting { s_a: 0.3, rho: 0.2 }], replicates: 1, ..tiny_grid() };
    let res = run_grid(&grid).unwrap();
    assert_eq!(res.cells.len(), 3);
    assert!(res.failures.is_empty());
    assert!(res.cells.iter().all(|c| c.coverage == 0.0 || c.coverage == 1.0));
}
