//! Harness-level integration: exit codes, emitted files, schema round-trips.

use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sra"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();

    // Not JSON at all.
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["iterate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "diagnostics missing: {stderr}");

    // Valid JSON, wrong schema (unknown field).
    let cfg = write_config(
        dir.path(),
        "wrong.json",
        serde_json::json!({
            "update": {"n": 10, "T": 1, "mode": "exact-gibbs"},
            "policy": {"kind": "tabular-random", "n_prompts": 2, "n_responses": 4},
            "bogus_key": 1
        }),
    );
    let out = run(&["iterate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));

    // Missing config file.
    let out = run(&["trap", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));

    // Grid precondition violations are config errors.
    let cfg = write_config(
        dir.path(),
        "grid.json",
        serde_json::json!({
            "d": 3, "m": 6, "delta": 0.3,
            "n_grid": [50, 100, 200], "trials": 100
        }),
    );
    let out = run(&["hard-instance", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        "trials.json",
        serde_json::json!({
            "d": 3, "m": 6, "delta": 0.3,
            "n_grid": [50, 100, 200, 400], "trials": 1
        }),
    );
    let out = run(&["hard-instance", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trap_grid_succeeds_and_reports_construction_errors_as_rows() {
    let dir = tempfile::tempdir().unwrap();
    // p* = 0.5 admits no positive epsilon: a construction-error row, not a
    // crash and not an assertion failure.
    let cfg = write_config(
        dir.path(),
        "trap.json",
        serde_json::json!({
            "p_star_grid": [0.4, 0.5],
            "epsilon_factors": [1.0],
            "h_grid": [2],
            "v_grid": [4]
        }),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["trap", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("reports.json")).unwrap())
            .unwrap();
    let rows = reports.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].get("assertions").is_some());
    assert!(rows[1].get("error").is_some());
}

#[test]
fn spectral_dominance_violation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // Slow exponential decay (alpha well below log 2) near lambda = C: the
    // pinned head+1 bound undercounts the heavy tail, so dominance fails
    // and the run reports it.
    let cfg = write_config(
        dir.path(),
        "spectral.json",
        serde_json::json!({
            "regime": {"kind": "exponential", "c": 1.0, "alpha": 0.2},
            "source": {"kind": "saturating", "d": 400},
            "lambda_grid": {"from": 0.3, "to": 0.95, "points": 8}
        }),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["spectral", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("dominance.json")).unwrap())
            .unwrap();
    assert!(!report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn iterate_emits_parseable_trajectory_with_monotone_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "iterate.json",
        serde_json::json!({
            "seed": 3,
            "update": {"n": 20, "T": 12, "mode": "exact-gibbs", "beta": 1.0},
            "policy": {"kind": "tabular-random", "n_prompts": 5, "n_responses": 10}
        }),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["iterate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let rows = sra_core::reward::trajectory_from_csv(&csv).unwrap();
    assert_eq!(rows.len(), 13);
    for w in rows.windows(2) {
        assert!(w[1].kappa <= w[0].kappa + 1e-12, "kappa must not increase");
    }
    // Emitted CSV round-trips byte-identically through its schema.
    assert_eq!(sra_core::reward::trajectory_to_csv(&rows), csv);

    let theory = std::fs::read_to_string(out_dir.join("theory.csv")).unwrap();
    let theory_rows = sra_core::dynamics::theory_curve_from_csv(&theory).unwrap();
    assert_eq!(theory_rows.len(), 13);

    // Manifest checksums match the files on disk.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    for (name, hash) in manifest["files"].as_object().unwrap() {
        let bytes = std::fs::read(out_dir.join(name)).unwrap();
        let mut hasher = <sha2::Sha256 as sha2::Digest>::new();
        sha2::Digest::update(&mut hasher, &bytes);
        let digest = sha2::Digest::finalize(hasher);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(&hex, hash.as_str().unwrap(), "checksum mismatch for {name}");
    }
}

#[test]
fn iterate_reads_policies_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let policy = sra_core::policy::TabularPolicy::from_rows(&[
        vec![0.5, 0.3, 0.2],
        vec![0.25, 0.5, 0.25],
    ])
    .unwrap();
    let policy_path = dir.path().join("policy.txt");
    std::fs::write(&policy_path, policy.to_text()).unwrap();

    let cfg = write_config(
        dir.path(),
        "iterate.json",
        serde_json::json!({
            "update": {"n": 10, "T": 2, "mode": "exact-gibbs", "beta": 1.0},
            "policy": {"kind": "tabular-file", "path": policy_path.to_str().unwrap()}
        }),
    );
    let out_dir = dir.path().join("out");
    let out = run(&["iterate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let rows = sra_core::reward::trajectory_from_csv(
        &std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap(),
    )
    .unwrap();
    // kappa_0 of the file policy: mean of 1/0.5 over both prompts = 2.
    assert!((rows[0].kappa - 2.0).abs() < 1e-12);

    // Linear policies load from their JSON document too.
    let linear = sra_cli::gen::random_linear(2, 5, 3, 0.3, 10.0, &mut sra_core::stream::root_rng(8))
        .unwrap();
    let linear_path = dir.path().join("policy.json");
    std::fs::write(&linear_path, linear.to_json()).unwrap();
    let cfg = write_config(
        dir.path(),
        "iterate-linear.json",
        serde_json::json!({
            "update": {"n": 50, "T": 2, "mode": "erm-linear", "beta": 0.5},
            "policy": {"kind": "linear-file", "path": linear_path.to_str().unwrap()}
        }),
    );
    let out_dir = dir.path().join("out-linear");
    let out = run(&["iterate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(out_dir.join("trajectory.csv").exists());
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dyn.json",
        serde_json::json!({
            "inputs": {"c": 0.5, "gamma": 0.3, "delta": 0.5, "rho": 0.1, "n": 100,
                        "beta": 0.1, "complexity": {"kind": "finite", "log_class_size": 2.0}},
            "kappa0": 10.0, "T": 5
        }),
    );
    let out_dir = dir.path().join("env-out");
    let out = Command::new(env!("CARGO_BIN_EXE_sra"))
        .args(["dynamics", "--config", &cfg])
        .env("SRA_OUT", &out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(out_dir.join("theory.csv").exists());
    assert!(out_dir.join("params.json").exists());
}
