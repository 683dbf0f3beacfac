//! End-to-end tests of the command-line interface: the full
//! gen-data -> train -> eval -> continuity -> trajectory pipeline in a
//! temporary directory, JSON outputs, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_so3vae"))
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> serde_json::Value {
    run_ok(out);
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Small but complete run-through of every artifact-producing subcommand.
#[test]
fn pipeline_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // tiny representation and short training keep this test quick
    let small = |c: &mut Command| {
        c.args(["--out-dir", d, "--seed", "5"]);
        for kv in [
            "degrees=1",
            "multiplicity=1",
            "n_train=256",
            "n_eval=32",
            "steps=40",
            "hidden=16",
            "nll_samples=20",
            "elbo_samples=4",
            "n_paths=5",
            "path_steps=16",
        ] {
            c.args(["--set", kv]);
        }
    };

    let mut c = bin();
    small(&mut c);
    run_ok(&c.arg("gen-data").output().unwrap());
    assert!(dir.path().join("train.csv").exists());
    assert!(dir.path().join("train.csv.json").exists());
    assert!(dir.path().join("eval.csv").exists());

    let mut c = bin();
    small(&mut c);
    run_ok(&c.arg("train").output().unwrap());
    let model_path = dir.path().join("model-ae-s2s2-5.json");
    assert!(model_path.exists());
    assert!(dir.path().join("run-ae-s2s2-5.meta.json").exists());
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next().unwrap(),
        "label,model,nll,elbo,recon,kl,disc,seconds,seed"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("ae-s2s2,ae,nan,nan,"), "row: {row}");

    // re-evaluating the saved model appends a second, matching row
    let mut c = bin();
    small(&mut c);
    run_ok(
        &c.arg("eval")
            .arg("--model")
            .arg(&model_path)
            .output()
            .unwrap(),
    );
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    let recon = |line: &str| line.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    let rows: Vec<&str> = results.lines().skip(1).collect();
    assert!((recon(rows[0]) - recon(rows[1])).abs() < 1e-12);

    let mut c = bin();
    small(&mut c);
    run_ok(
        &c.arg("continuity")
            .arg("--model")
            .arg(&model_path)
            .output()
            .unwrap(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("continuity.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_paths"], 5);

    let mut c = bin();
    small(&mut c);
    run_ok(
        &c.arg("trajectory")
            .arg("--model")
            .arg(&model_path)
            .args(["--steps", "16"])
            .output()
            .unwrap(),
    );
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 17); // header + closed loop
    assert!(traj.lines().next().unwrap().starts_with("step,phi,recon_err,"));
}

#[test]
fn sample_density_entropy_report_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    let out = bin()
        .args(["--out-dir", d, "sample", "--sigma", "0.5", "--n", "7"])
        .output()
        .unwrap();
    run_ok(&out);
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 8);

    let out = bin()
        .args([
            "--out-dir", d, "density", "--sigma", "0.5", "--angle", "0.7", "--axis", "1,0,0",
        ])
        .output()
        .unwrap();
    let v = stdout_json(&out);
    let ld = v["log_density"].as_f64().unwrap();
    assert!((v["density"].as_f64().unwrap() - ld.exp()).abs() < 1e-12);
    // anisotropic scale is accepted too
    let out = bin()
        .args([
            "--out-dir", d, "density", "--sigma", "0.5,0.5,0.5", "--angle", "0.7", "--axis",
            "1,0,0",
        ])
        .output()
        .unwrap();
    let v2 = stdout_json(&out);
    assert!((v2["log_density"].as_f64().unwrap() - ld).abs() < 1e-12);

    let out = bin()
        .args([
            "--out-dir", d, "entropy", "--sigma", "0.4", "--n-samples", "5000",
        ])
        .output()
        .unwrap();
    let v = stdout_json(&out);
    assert!(v["entropy"].as_f64().unwrap().is_finite());
    assert!(v["stderr"].as_f64().unwrap() > 0.0);
    assert_eq!(v["n_samples"], 5000);
}

#[test]
fn seeds_make_runs_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = bin()
            .args(["--out-dir", dir.to_str().unwrap(), "--seed", "9"])
            .args(["--set", "degrees=1", "--set", "multiplicity=1", "--set", "n_train=64"])
            .args(["--set", "n_eval=16"])
            .arg("gen-data")
            .output()
            .unwrap();
        run_ok(&out);
    }
    let read = |p: &Path| std::fs::read_to_string(p.join("train.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn bad_usage_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // unknown --set key
    let out = bin()
        .args(["--out-dir", d, "--set", "bogus=1", "gen-data"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // invalid sigma
    let out = bin()
        .args(["--out-dir", d, "sample", "--sigma", "0.5,0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // config value that fails validation
    let out = bin()
        .args(["--out-dir", d, "--set", "lr=-1", "gen-data"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // training without data files
    let out = bin().args(["--out-dir", d, "train"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // evaluating a missing model
    let out = bin()
        .args(["--out-dir", d, "eval", "--model", "nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"seed": 3, "degrees": 1, "multiplicity": 1, "n_train": 64, "n_eval": 16}"#,
    )
    .unwrap();
    let out = bin()
        .args(["--out-dir", d, "--config", cfg_path.to_str().unwrap()])
        .args(["--set", "n_train=32"])
        .arg("gen-data")
        .output()
        .unwrap();
    run_ok(&out);
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("train.csv.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["n"], 32);
    assert_eq!(meta["seed"], 3);
}
