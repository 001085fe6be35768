mod common;

use std::fs;
use std::process::Command;

use common::{digest_tree, mspf, small_sim1, write_config};

#[test]
fn simulate_writes_truth_and_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.config", &small_sim1(4, 6));
    let out = tmp.path().join("run");
    let o = mspf(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "states_scale0.csv",
        "states_scale1.csv",
        "measurements_scale0.csv",
        "measurements_scale1.csv",
        "indicators.csv",
        "resolved_config.toml",
        "metadata.toml",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let rows = fs::read_to_string(out.join("measurements_scale1.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 6 * 6);
}

#[test]
fn invalid_config_exits_2_with_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let mut file = small_sim1(4, 6);
    file.dirichlet_alpha = Some(vec![1.0, -1.0]);
    file.initial_states = Some(vec![0.0; 5]);
    let config = write_config(tmp.path(), "bad.config", &file);
    let out = tmp.path().join("run");
    let o = mspf(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dirichlet_alpha"), "{err}");
    assert!(err.contains("initial_states"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unparsable_config_exits_2_and_missing_file_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.config");
    fs::write(&bad, "seed = \"x\"").unwrap();
    let out = tmp.path().join("run");
    let o = mspf(&["simulate", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = tmp.path().join("nope.config");
    let o = mspf(&["simulate", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_override_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.config", &small_sim1(4, 6));
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = mspf(&["simulate", "--config", config.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        digest_tree(&out)
    };
    let a = run("a", "7");
    assert_eq!(a, run("b", "7"));
    assert_ne!(a, run("c", "8"));
}

#[test]
fn filter_evaluates_against_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.config", &small_sim1(4, 8));
    let c = config.to_str().unwrap();
    let truth = tmp.path().join("truth");
    assert!(mspf(&["simulate", "--config", c, "--out", truth.to_str().unwrap()]).status.success());
    let out = tmp.path().join("filtered");
    let o = mspf(&[
        "filter",
        "--config",
        c,
        "--measurements",
        truth.to_str().unwrap(),
        "--particles",
        "100",
        "--snapshot",
        "--burn-in",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("indicator accuracy (burn-in 2)"));
    for f in [
        "estimates_scale0.csv",
        "estimates_scale1.csv",
        "indicator_estimates.csv",
        "ess.csv",
        "filter_summary.toml",
        "snapshots.csv",
        "plot.csv",
        "report/rmse_scale1.csv",
        "report/summary.txt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let snaps = fs::read_to_string(out.join("snapshots.csv")).unwrap().lines().count();
    assert_eq!(snaps, 1 + 6 * 8 * 100);
}

#[test]
fn single_particle_filter_runs_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.config", &small_sim1(3, 8));
    let c = config.to_str().unwrap();
    let truth = tmp.path().join("truth");
    assert!(mspf(&["simulate", "--config", c, "--out", truth.to_str().unwrap()]).status.success());
    let out = tmp.path().join("filtered");
    let o = mspf(&[
        "filter",
        "--config",
        c,
        "--measurements",
        truth.to_str().unwrap(),
        "--particles",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("single-particle"));
}

#[test]
fn mismatched_measurements_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let small = write_config(tmp.path(), "small.config", &small_sim1(3, 4));
    let other = write_config(tmp.path(), "other.config", &small_sim1(3, 5));
    let truth = tmp.path().join("truth");
    assert!(mspf(&["simulate", "--config", small.to_str().unwrap(), "--out", truth.to_str().unwrap()])
        .status
        .success());
    let o = mspf(&[
        "filter",
        "--config",
        other.to_str().unwrap(),
        "--measurements",
        truth.to_str().unwrap(),
        "--out",
        tmp.path().join("f").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn degenerate_abort_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut file = small_sim1(3, 8);
    file.scales[0].measurement_noise = vec![mspf::config::CovSpec::Scaled(0.0); 6];
    let config = write_config(tmp.path(), "c.config", &file);
    let c = config.to_str().unwrap();
    let truth = tmp.path().join("truth");
    assert!(mspf(&["simulate", "--config", c, "--out", truth.to_str().unwrap()]).status.success());
    let args = |policy: &'static str, out: &str| {
        vec![
            "filter".to_string(),
            "--config".into(),
            c.into(),
            "--measurements".into(),
            truth.to_str().unwrap().into(),
            "--particles".into(),
            "20".into(),
            "--degenerate-policy".into(),
            policy.into(),
            "--out".into(),
            tmp.path().join(out).to_str().unwrap().into(),
        ]
    };
    let run = |a: Vec<String>| mspf(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(run(args("abort", "a")).status.code(), Some(3));
    assert!(run(args("uniform", "u")).status.success());
}

#[test]
fn reproduce_is_repeatable_and_reports_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.config", &small_sim1(4, 9));
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = mspf(&[
            "reproduce",
            "sim1",
            "--config",
            config.to_str().unwrap(),
            "--seeds",
            "1",
            "--seed-base",
            "42",
            "--particles",
            "50",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(matches!(o.status.code(), Some(0) | Some(4)), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout).to_string();
        assert!(stdout.lines().all(|l| l.starts_with("sim1 PASS") || l.starts_with("sim1 FAIL")));
        assert_eq!(stdout.lines().count(), 5);
        assert_eq!(o.status.code() == Some(0), !stdout.contains("FAIL"));
        (fs::read_to_string(out.join("summary.txt")).unwrap(), digest_tree(&out))
    };
    let (sa, da) = run("a");
    let (sb, db) = run("b");
    assert_eq!(sa, sb);
    assert_eq!(da, db);
    assert!(da.contains_key("seed_42/plot.csv"));
    assert!(da.contains_key("acceptance.txt"));
}

#[test]
fn thread_cap_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_mspf"))
        .args(["reproduce", "sim1", "--out", "/nonexistent/never"])
        .env("MSPF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("MSPF_THREADS"));
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.config", &small_sim1(4, 6));
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_mspf"))
            .args(["reproduce", "sim1", "--config", config.to_str().unwrap(), "--seeds", "2"])
            .args(["--particles", "80", "--out", out.to_str().unwrap()])
            .env("MSPF_THREADS", threads)
            .output()
            .unwrap();
        assert!(matches!(o.status.code(), Some(0) | Some(4)));
        digest_tree(&out)
    };
    assert_eq!(run("one", "1"), run("three", "3"));
}
