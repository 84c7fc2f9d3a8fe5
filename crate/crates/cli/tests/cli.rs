use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fracergo(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fracergo"));
    cmd.args(args).env_remove("FRACERGO_THREADS");
    if let Some(t) = threads {
        cmd.env("FRACERGO_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn decay_config(out: &Path) -> String {
    format!(
        r#"{{"experiment": "decay", "kernel": {{"family": "fractional", "H": 0.3}},
            "drift": {{"family": "flatbottom", "R": 1.0, "kappa": 1.0}}, "sigma": [1.0],
            "horizon": 4.0, "step": 0.01, "replicas": 24, "seed": 11,
            "output": "{}", "params": {{"t_burn": 5.0}}}}"#,
        out.display()
    )
}

#[test]
fn list_maps_every_experiment_to_a_section() {
    let out = fracergo(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 9);
    let squeezed: Vec<String> = text.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ")).collect();
    assert!(squeezed.iter().any(|l| l.starts_with("coalesce → §6")));
    assert!(squeezed.iter().any(|l| l.starts_with("schedule → §4")));
}

#[test]
fn zero_replicas_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = decay_config(&dir.path().join("out")).replace("\"replicas\": 24", "\"replicas\": 0");
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = fracergo(&["run", &path], None);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["path"], "replicas");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = decay_config(&dir.path().join("out")).replace("\"t_burn\": 5.0", "\"t_burn\": 5.0, \"burn\": 1");
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = fracergo(&["run", &path], None);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["path"], "params.burn");
}

#[test]
fn decay_output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for (i, threads) in ["1", "2", "1"].into_iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let path = write_config(dir.path(), &format!("c{i}.json"), &decay_config(&out_dir));
        let out = fracergo(&["run", &path], Some(threads));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(std::fs::read(out_dir.join("decay.csv")).unwrap());
        let manifest: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 11);
        assert_eq!(manifest["artifacts"][0]["file"], "decay.csv");
    }
    assert!(csvs.windows(2).all(|w| w[0] == w[1]));
    let text = String::from_utf8(csvs.pop().unwrap()).unwrap();
    assert!(text.starts_with("t,mean_sq_gap,ci_low,ci_high,n\n"));
}

#[test]
fn verify_kernel_writes_a_passing_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("cert");
    let cfg = format!(
        r#"{{"experiment": "verify-kernel", "kernel": {{"family": "fractional", "H": 0.3}},
            "replicas": 1, "seed": 0, "output": "{}"}}"#,
        out_dir.display()
    );
    let out = fracergo(&["run", &write_config(dir.path(), "k.json", &cfg)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cert: Value = serde_json::from_slice(&std::fs::read(out_dir.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["pass"], true);
    assert_eq!(cert["regularity"]["certificate"]["alpha"].as_f64().map(|a| (a - 0.2).abs() < 1e-12), Some(true));
}

#[test]
fn double_well_fails_with_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"experiment": "verify-drift", "kernel": {{"family": "fractional", "H": 0.5}},
            "drift": {{"family": "double-well"}}, "replicas": 500, "seed": 3, "output": "{}"}}"#,
        dir.path().join("dw").display()
    );
    let out = fracergo(&["run", &write_config(dir.path(), "dw.json", &cfg)], None);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["kind"], "not-monotone");
}

#[test]
fn dry_run_prints_the_layout_and_computes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let path = write_config(dir.path(), "c.json", &decay_config(&out_dir));
    let out = fracergo(&["run", &path, "--dry-run", "--threads", "1"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("replicas     24 on 1 thread(s)"), "{text}");
    assert!(text.contains("seeds        \"decay\" 0:"));
    assert!(!out_dir.exists());
}
