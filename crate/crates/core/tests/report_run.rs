use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use serde_json::Value;
use trapcheck_core::config::{parse_config_str, RunConfig};
use trapcheck_core::hamiltonian_flow::step_count;
use trapcheck_core::report::{run_full_report, write_run, RunOptions, REPORT_FILE};
use trapcheck_core::Error;

fn quick() -> RunOptions {
    RunOptions { quick: true }
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn report_schema_is_complete() {
    let cfg = RunConfig::with_params(4, 1.0, 0.03);
    let out = run_full_report(&cfg, &quick()).unwrap();
    let v = serde_json::to_value(&out.report).unwrap();
    let top: BTreeSet<String> = [
        "schema_version",
        "quick",
        "config",
        "geometry",
        "dynamics",
        "subprincipal",
        "psi_inner",
        "verdicts",
        "anchors",
        "warnings",
        "all_passed",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert_eq!(keys(&v), top);
    for k in ["r_minus", "r_plus", "r_p", "beta_minus", "beta_plus", "nu_candidates"] {
        assert!(v["geometry"].get(k).is_some(), "geometry.{k}");
    }
    for k in ["lyapunov_rate", "escape", "max_p_drift", "max_eta_drift", "perturbed"] {
        assert!(v["dynamics"].get(k).is_some(), "dynamics.{k}");
    }
    for k in ["nilpotency", "symmetry", "kappa", "gap_eigenvalue_normalization", "gap_nu_min_normalization", "transport"] {
        assert!(v["subprincipal"].get(k).is_some(), "subprincipal.{k}");
    }
    for k in ["factorization", "tensor", "jordan"] {
        assert!(v["psi_inner"].get(k).is_some(), "psi_inner.{k}");
    }
    let ids: Vec<u64> = v["verdicts"].as_array().unwrap().iter().map(|x| x["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=12).collect::<Vec<_>>());
    for verdict in v["verdicts"].as_array().unwrap() {
        let s = verdict["status"].as_str().unwrap();
        assert!(s == "pass" || s == "fail");
    }
    assert_eq!(v["anchors"].as_array().unwrap().len(), 12);
    out.report.check_finite().unwrap();
    assert_eq!(out.report.all_passed, out.report.failed().is_empty());
}

#[test]
fn five_dimensional_photon_sphere_in_report() {
    let cfg = RunConfig::with_params(5, 1.0, 0.01);
    let out = run_full_report(&cfg, &quick()).unwrap();
    assert_eq!(out.report.geometry.r_p, 2.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let mut cfg = RunConfig::with_params(4, 1.0, 0.03);
    cfg.seed = 42;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_run(&run_full_report(&cfg, &quick()).unwrap(), a.path()).unwrap();
    write_run(&run_full_report(&cfg, &quick()).unwrap(), b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn seed_changes_perturbed_samples() {
    let mut cfg = RunConfig::with_params(4, 1.0, 0.03);
    let a = run_full_report(&cfg, &quick()).unwrap();
    cfg.seed = 7;
    let b = run_full_report(&cfg, &quick()).unwrap();
    assert_ne!(a.report.dynamics.perturbed[0].delta, b.report.dynamics.perturbed[0].delta);
}

#[test]
fn gamma_csv_is_trapped_and_conserved() {
    let mut cfg = RunConfig::with_params(4, 1.0, 0.03);
    cfg.seeds = 2;
    let dir = tempfile::tempdir().unwrap();
    let out = run_full_report(&cfg, &quick()).unwrap();
    let path = write_run(&out, dir.path()).unwrap();
    assert_eq!(path, dir.path().join(REPORT_FILE));
    let text = std::fs::read_to_string(dir.path().join("trajectory_gamma.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,r,xi,omega_1,omega_2,omega_3,eta_1,eta_2,eta_3,p_value");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    let t = out.report.dynamics.t_final;
    assert_eq!(rows.len(), step_count(t, cfg.dt) + 1);
    assert_eq!(rows.len(), (t / cfg.dt).floor() as usize + 1);
    let rp = out.report.geometry.r_p;
    let p0 = rows[0][9];
    for row in &rows {
        assert_eq!(row.len(), 10);
        assert!((row[1] - rp).abs() <= 1e-6);
        assert!((row[9] - p0).abs() <= 1e-8);
    }
    assert!(dir.path().join("trajectory_seed_000.csv").exists());
    assert!(dir.path().join("trajectory_seed_001.csv").exists());
}

#[test]
fn default_config_passes_within_budget() {
    let cfg = parse_config_str(r#"{"n": 4, "mass": 1, "Lambda": 0.03}"#).unwrap();
    let t0 = Instant::now();
    let out = run_full_report(&cfg, &RunOptions::default()).unwrap();
    assert!(t0.elapsed() < Duration::from_secs(60));
    let failed: Vec<_> = out.report.failed().iter().map(|v| format!("{} {}", v.id, v.detail)).collect();
    assert!(out.report.all_passed, "failing items: {failed:?}");
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut cfg = RunConfig::with_params(4, 1.0, 0.2);
    assert!(matches!(run_full_report(&cfg, &quick()), Err(Error::Validation(_))));
    cfg.lambda_cosmo = 0.03;
    cfg.k_sweep = vec![5];
    assert!(matches!(run_full_report(&cfg, &quick()), Err(Error::Validation(_))));
}

#[test]
fn parse_examples() {
    let cfg = parse_config_str(r#"{"n": 4, "mass": 1, "Lambda": 0.03}"#).unwrap();
    assert_eq!(cfg, RunConfig::with_params(4, 1.0, 0.03));
    assert_eq!(cfg.eps_sweep, vec![1e-1, 1e-2, 1e-3]);
    assert_eq!(cfg.k_sweep, vec![1, 2]);
    assert_eq!((cfg.t_final, cfg.dt, cfg.seeds), (50.0, 1e-3, 16));
    // 9M²Λ ≥ 1 at n = 4
    let e = parse_config_str(r#"{"n": 4, "mass": 1, "Lambda": 0.12}"#).unwrap_err();
    assert!(matches!(e, Error::Validation(_)), "{e}");
    let e = parse_config_str("{\n  \"n\": 4,\n  \"mass\": 1,,\n}").unwrap_err();
    match e {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_config_roundtrips(
        n in 4usize..=7,
        mass in 0.2f64..3.0,
        frac in 0.05f64..0.95,
        eps in proptest::collection::vec(1e-6f64..1.0, 1..5),
        ks in proptest::collection::vec(1usize..=4, 1..4),
        t in 0.1f64..100.0,
        seeds in 0usize..64,
        seed in any::<u64>(),
    ) {
        let rp = ((n as f64 - 1.0) * mass).powf(1.0 / (n as f64 - 3.0));
        let lc = (n as f64 - 3.0) / ((n as f64 - 1.0) * rp * rp);
        let big = frac * lc * (n as f64 - 2.0) * (n as f64 - 1.0) / 2.0;
        let mut cfg = RunConfig::with_params(n, mass, big);
        cfg.eps_sweep = eps;
        cfg.k_sweep = ks;
        cfg.t_final = t;
        cfg.seeds = seeds;
        cfg.seed = seed;
        prop_assert!(cfg.validate().is_ok());
        let back = parse_config_str(&cfg.to_canonical_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
