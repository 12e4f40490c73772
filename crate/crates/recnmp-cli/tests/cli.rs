//! End-to-end CLI tests driving the built binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn recnmp(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_recnmp"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_CONFIG: &str = r#"
memory = "1x2"
variant = "nmp-cache"
seed = 5
refresh = false

[trace]
kind = "locality"
tables = 2
rows = 8192
vec_bytes = 64
num_batches = 2
poolings_per_batch = 4
pooling_factor = 16
zipf_exponent = 0.9
"#;

#[test]
fn simulate_emits_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", SMALL_CONFIG);
    let out = recnmp(&["simulate", &cfg], &[]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["variant"], "nmp-cache");
    assert!(report["speedup"].as_f64().unwrap() > 0.0);
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn simulate_env_seed_override_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", SMALL_CONFIG);
    let a = recnmp(&["simulate", &cfg], &[]);
    let b = recnmp(&["simulate", &cfg], &[("RECNMP_SEED", "99")]);
    assert!(a.status.success() && b.status.success());
    let ja: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let jb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(jb["seed"], 99);
    assert_ne!(ja["config_hash"], jb["config_hash"]);
}

#[test]
fn config_errors_exit_2_runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.toml",
        &SMALL_CONFIG.replace("vec_bytes = 64", "vec_bytes = 96"),
    );
    let out = recnmp(&["simulate", &bad], &[]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trace.vec_bytes"));

    // A well-formed config pointing at a missing trace file is a runtime
    // error.
    let missing = write_config(
        dir.path(),
        "missing.toml",
        r#"
memory = "1x2"
variant = "baseline"

[trace]
kind = "file"
path = "/nonexistent/trace.txt"
"#,
    );
    let out = recnmp(&["simulate", &missing], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_trace_then_locality_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("t.trace");
    let out = recnmp(
        &[
            "gen-trace",
            "--tables",
            "2",
            "--rows",
            "4096",
            "--batches",
            "2",
            "--poolings-per-batch",
            "4",
            "--pooling-factor",
            "8",
            "--zipf",
            "0.9",
            "--seed",
            "3",
            "--out",
            trace_path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&trace_path).unwrap();
    assert!(text.starts_with("# recnmp-trace v1"));

    let out = recnmp(
        &[
            "locality",
            trace_path.to_str().unwrap(),
            "--capacities",
            "8KB,16KB",
            "--lines",
            "64,128",
            "--line-capacity",
            "16KB",
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("capacity,line,ways,hit_rate"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn sweep_produces_cartesian_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", SMALL_CONFIG);
    let out = recnmp(
        &[
            "sweep",
            &cfg,
            "--param",
            "poolings_per_packet=2,4",
            "--param",
            "variant=nmp-base,nmp-cache",
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("config,packet_size,normalized_latency"));
    assert_eq!(lines.count(), 4);

    let out = recnmp(&["sweep", &cfg, "--param", "bogus=1"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_matches_closed_form() {
    let out = recnmp(&["estimate", "--f", "0.689", "--s", "9.8"], &[]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = v["end_to_end_speedup"].as_f64().unwrap();
    assert!((s - 2.6226).abs() < 1e-3);

    let out = recnmp(&["estimate", "--model", "RM2-large", "--batch", "8", "--s", "9.8"], &[]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sls_fraction"].as_f64().unwrap(), 0.689);

    let out = recnmp(&["estimate", "--f", "1.5", "--s", "9.8"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
