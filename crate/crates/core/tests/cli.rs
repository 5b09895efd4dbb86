use std::path::Path;
use std::process::Command;

use nls_steer::runner::Manifest;

const BIN: &str = env!("CARGO_BIN_EXE_nls-steer");

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

fn nls(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(BIN).args(args).current_dir(dir).env_remove("NLS_STEER_WORKERS").output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

const PLAN: &str = r#"{
  "sign_convention": "exp(+i|k|^2 t)",
  "plan": { "base": { "generators": [[1, 0], [0, 1]] }, "targets": { "modes": [[2, -1]] }, "window": 3 }
}"#;

const SYNTH: &str = r#"{
  "sign_convention": "exp(+i|k|^2 t)",
  "discretization": { "dim": 2, "cutoff": 4, "s": 1.1, "dt": 1e-3 },
  "synthesize": {
    "chain": { "file": "plan/chain.json" },
    "targets": [{ "mode": [2, -1], "signal": { "constant": [0.05, 0.0] } }],
    "eps": 0.1,
    "horizon": 0.5
  },
  "simulate": { "source": { "program": "synth/program.json" }, "horizon": 0.5, "stride": 50 }
}"#;

const SWEEP: &str = r#"{
  "sign_convention": "exp(+i|k|^2 t)",
  "discretization": { "dim": 2, "cutoff": 4, "s": 1.1, "dt": 2e-3 },
  "sweep": {
    "chain": { "plan": { "base": { "generators": [[1, 0], [0, 1]] }, "targets": { "modes": [[2, -1]] }, "window": 3 } },
    "mode": [2, -1],
    "amplitudes": [[0.02, 0.0], [0.0, 0.04]],
    "eps_ladder": [0.2, 0.1, 0.05],
    "horizon": 0.5
  }
}"#;

#[test]
fn plan_synthesize_simulate_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "plan.json", PLAN);
    write(d, "synth.json", SYNTH);
    assert_eq!(nls(&["synthesize", "--config", "synth.json", "--out", "synth"], d).0, 2);
    let (code, err) = nls(&["synthesize", "--config", "synth.json", "--out", "synth"], d);
    assert!(err.contains("run `plan` first"), "{err}");
    assert_eq!(code, 2);
    assert_eq!(nls(&["plan", "--config", "plan.json", "--out", "plan"], d).0, 0);
    assert_eq!(nls(&["synthesize", "--config", "synth.json", "--out", "synth"], d).0, 0);
    assert_eq!(nls(&["simulate", "--config", "synth.json", "--out", "sim"], d).0, 0);

    let m = Manifest::read(&d.join("synth/manifest.json")).unwrap();
    assert_eq!(m.subcommand, "synthesize");
    assert_eq!(m.sign_convention, "exp(+i|k|^2 t)");
    assert!(m.chain.is_some());
    for f in &m.files {
        let bytes = std::fs::read(d.join("synth").join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        assert_eq!(nls_steer::runner::manifest::sha256_hex(&bytes), f.sha256);
    }
    let csv = std::fs::read_to_string(d.join("synth/program_1_0.csv")).unwrap();
    assert!(csv.starts_with("t_start,t_end,re,im"));
    let diag = std::fs::read_to_string(d.join("sim/diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,mass,energy,hs"));
    assert_eq!(diag.lines().count(), 1 + 2 + 500 / 50 - 1 + 1);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "low_s.json", r#"{"sign_convention":"exp(+i|k|^2 t)","discretization":{"dim":2,"cutoff":4,"s":1.0},"simulate":{"horizon":1}}"#);
    write(d, "sign.json", r#"{"sign_convention":"exp(-i|k|^2 t)"}"#);
    write(d, "extra.json", r#"{"sign_convention":"exp(+i|k|^2 t)","bogus":true}"#);
    let (code, err) = nls(&["simulate", "--config", "low_s.json"], d);
    assert_eq!(code, 2);
    assert!(err.contains("s > d/2"));
    assert_eq!(nls(&["plan", "--config", "sign.json"], d).0, 2);
    assert_eq!(nls(&["plan", "--config", "extra.json"], d).0, 2);
    assert_eq!(nls(&["plan", "--config", "missing.json"], d).0, 2);
    assert_eq!(nls(&["plan", "--config", "extra.json", "--workers", "0"], d).0, 2);
}

#[test]
fn numerical_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "pic.json",
        r#"{"sign_convention":"exp(+i|k|^2 t)",
            "discretization":{"dim":1,"cutoff":8,"s":1.0,"dt":0.5,"scheme":"duhamel_picard"},
            "simulate":{"initial":{"plane_wave":{"mode":[3],"amplitude":[5,0]}},"horizon":2}}"#,
    );
    assert_eq!(nls(&["simulate", "--config", "pic.json"], d).0, 3);
}

#[test]
fn sweep_is_independent_of_worker_count_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "sweep.json", SWEEP);
    let one = Command::new(BIN)
        .args(["sweep", "--config", "sweep.json", "--out", "w1"])
        .env("NLS_STEER_WORKERS", "1")
        .current_dir(d)
        .status()
        .unwrap();
    assert!(one.success());
    assert_eq!(nls(&["sweep", "--config", "sweep.json", "--out", "w4", "--workers", "4"], d).0, 0);
    let a = Manifest::read(&d.join("w1/manifest.json")).unwrap();
    let b = Manifest::read(&d.join("w4/manifest.json")).unwrap();
    assert!(a.differences(&b).is_empty());
    assert_eq!(a.files.iter().filter(|f| f.path.starts_with("jobs/")).count(), 2 * 6);
    let ladder = std::fs::read_to_string(d.join("w1/ladder.csv")).unwrap();
    assert_eq!(ladder.lines().count(), 7);

    assert_eq!(nls(&["replay", "--config", "w1", "--out", "again"], d).0, 0);
    let tampered = std::fs::read_to_string(d.join("w1/manifest.json")).unwrap();
    let first = &a.files[0].sha256;
    write(d, "w1/manifest.json", &tampered.replacen(first.as_str(), &"0".repeat(64), 1));
    let (code, err) = nls(&["replay", "--config", "w1/manifest.json", "--out", "again2"], d);
    assert_eq!(code, 3, "{err}");
}
