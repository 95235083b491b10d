mod common;

use common::{json, load, small};
use lohe_harness::sweep::{point_scenario, run_sweep, SweepPoint};
use lohe_harness::{execute, CommandKind};

#[test]
fn trichotomy_sweep_classifies_by_lambda() {
    let rows = run_sweep(&load("sweep_trichotomy.cfg")).unwrap();
    assert_eq!(rows.len(), 11);
    for row in &rows {
        assert_eq!(row.status, "ok", "{row:?}");
        let lambda = row.lambda.unwrap();
        let class = row.class.as_deref().unwrap();
        let expected = if lambda == 0.0 {
            "phase_sync"
        } else if lambda < 1.0 {
            "frequency_sync"
        } else {
            "none"
        };
        // Λ = 1 approaches the fixed point algebraically and is not classified here
        if (lambda - 1.0).abs() > 1e-12 {
            assert_eq!(class, expected, "Λ = {lambda}");
        }
        if lambda < 1.0 && lambda > 0.0 {
            let gamma = (1.0 - lambda * lambda).sqrt();
            let rate = row.rate.unwrap();
            assert!((rate - gamma).abs() <= 0.03 * gamma, "Λ = {lambda}: {rate} vs {gamma}");
            let phi = lambda.asin();
            let limit = row.distance_limit.unwrap();
            assert!((limit - 2.0 * (0.5 * phi).sin()).abs() < 1e-12);
            assert!((row.max_pair_distance.unwrap() - limit).abs() <= 1e-3);
        }
        if lambda > 1.0 {
            assert!(row.rate.is_none() && row.distance_limit.is_none());
        }
    }
}

#[test]
fn identical_sweep_rates_sit_at_the_coupling() {
    let rows = run_sweep(&load("sweep_identical.cfg")).unwrap();
    assert_eq!(rows.len(), 25);
    for row in &rows {
        assert_eq!(row.status, "ok", "{row:?}");
        assert_eq!(row.class.as_deref(), Some("phase_sync"), "{row:?}");
        let k = row.point.coupling;
        let rate = row.rate.expect("phase-synchronized rows carry a rate");
        assert!((rate - k).abs() <= 1e-4 * k, "{row:?}");
    }
}

#[test]
fn one_point_sweep_matches_simulate() {
    let mut base = small("[sweep]\ncoupling = 1\nomega = 0.25\n");
    base.solver.t_end = 4.0;
    let rows = run_sweep(&base).unwrap();
    assert_eq!(rows.len(), 1);
    let single = point_scenario(&base, SweepPoint { coupling: 1.0, omega: 0.25, n: 2, seed: base.seed });
    let summary = json(execute(CommandKind::Simulate, &single).unwrap().artifacts.get("summary.json").unwrap());
    let row = &rows[0];
    assert_eq!(row.zeta_norm.unwrap(), summary["final_zeta_norm"].as_f64().unwrap());
    assert_eq!(row.class.as_deref(), summary["sync"]["class"].as_str());
    assert_eq!(row.lambda.unwrap(), 0.5);
}

#[test]
fn sweep_without_section_is_a_config_error() {
    let err = execute(CommandKind::Sweep, &small("")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
