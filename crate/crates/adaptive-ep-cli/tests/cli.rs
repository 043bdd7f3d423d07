//! End-to-end checks of the binary: exit codes, output layout, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptive-ep"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

const STATIC_CONFIG: &str = r#"{
  "name": "standard_only",
  "generator": { "n_utterances": 4000, "seed": 5 },
  "agent": { "kind": "static", "policy": "standard_only" }
}"#;

#[test]
fn generate_writes_the_corpus_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "gen.json", STATIC_CONFIG);
    let out = dir.path().join("corpus");
    let result = bin()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_ok(&result);
    for f in ["manifest", "train", "dev", "test"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn run_writes_the_run_layout_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", STATIC_CONFIG);

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_ok(&result);
    }
    for f in [
        "config.json",
        "run.json",
        "metrics.csv",
        "trace.csv",
        "meta.json",
    ] {
        assert!(out_a.join(f).exists(), "{f} missing");
    }
    // Identical metrics files across repeat runs; meta (wall clock) may differ.
    for f in ["run.json", "metrics.csv", "trace.csv"] {
        assert_eq!(
            std::fs::read(out_a.join(f)).unwrap(),
            std::fs::read(out_b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn run_uses_the_output_root_env_when_out_is_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", STATIC_CONFIG);
    let root = dir.path().join("root");
    let result = bin()
        .args(["run", "--config"])
        .arg(&config)
        .env("ADAPTIVE_EP_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert_ok(&result);
    assert!(root.join("standard_only").join("run.json").exists());
}

#[test]
fn report_compares_runs_against_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let std_config = write_config(dir.path(), "std.json", STATIC_CONFIG);
    let rel_config = write_config(
        dir.path(),
        "rel.json",
        &STATIC_CONFIG.replace("standard_only", "relaxed_only"),
    );
    let out_std = dir.path().join("std");
    let out_rel = dir.path().join("rel");
    assert_ok(
        &bin()
            .args(["run", "--config"])
            .arg(&std_config)
            .arg("--out")
            .arg(&out_std)
            .output()
            .unwrap(),
    );
    assert_ok(
        &bin()
            .args(["run", "--config"])
            .arg(&rel_config)
            .arg("--out")
            .arg(&out_rel)
            .output()
            .unwrap(),
    );

    let csv_path = dir.path().join("table.csv");
    let result = bin()
        .arg("report")
        .arg(out_std.join("run.json"))
        .arg(out_rel.join("run.json"))
        .arg("--csv")
        .arg(&csv_path)
        .output()
        .unwrap();
    assert_ok(&result);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("Early EP rate change"), "{stdout}");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let recall = csv.lines().find(|l| l.starts_with("Recall")).unwrap();
    assert!(recall.ends_with("100.00"), "{recall}");

    // Report regeneration is byte-identical.
    let again = bin()
        .arg("report")
        .arg(out_std.join("run.json"))
        .arg(out_rel.join("run.json"))
        .output()
        .unwrap();
    assert_eq!(result.stdout, again.stdout);
}

#[test]
fn report_without_a_baseline_fails_with_validation_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let rel_config = write_config(
        dir.path(),
        "rel.json",
        &STATIC_CONFIG.replace("standard_only", "relaxed_only"),
    );
    let out_rel = dir.path().join("rel");
    assert_ok(
        &bin()
            .args(["run", "--config"])
            .arg(&rel_config)
            .arg("--out")
            .arg(&out_rel)
            .output()
            .unwrap(),
    );
    let result = bin()
        .arg("report")
        .arg(out_rel.join("run.json"))
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("error[validation]"), "{stderr}");
}

#[test]
fn invalid_config_yields_the_config_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.json",
        r#"{
          "name": "bad",
          "generator": { "n_utterances": 100, "seed": 0,
                         "target_standard_cutoff_rate": 0.01,
                         "target_dual_cutoff_rate": 0.5 },
          "agent": { "kind": "oracle" }
        }"#,
    );
    let result = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("error[config]"), "{stderr}");
}

#[test]
fn sweep_writes_a_curve_for_a_supervised_agent() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sup.json",
        r#"{
          "name": "sup",
          "generator": { "n_utterances": 6000, "seed": 2 },
          "agent": {
            "kind": "supervised",
            "classifier": { "epochs": 2, "hidden": [16] },
            "tau_sweep": [0.0, 0.5, 1.0]
          }
        }"#,
    );
    let out = dir.path().join("sweep");
    let result = bin()
        .args(["sweep", "--config"])
        .arg(&config)
        .args(["--values", "0.0,0.25,0.5,0.75,1.0"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_ok(&result);
    let csv = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6, "{csv}");
    assert!(out.join("curve.json").exists());
}

#[test]
fn presets_write_runnable_configs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("configs");
    let result = bin()
        .args(["preset", "--name", "information", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_ok(&result);
    let entries: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert_eq!(entries.len(), 3);

    // Each preset file parses back into a valid config.
    for entry in entries {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(parsed.get("agent").is_some());
    }

    // Unknown preset name.
    let bad = bin()
        .args(["preset", "--name", "bogus", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn run_flag_overrides_take_effect() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", STATIC_CONFIG);
    let out = dir.path().join("named");
    let result = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--name", "renamed", "--corpus-seed", "77", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_ok(&result);
    let snapshot = std::fs::read_to_string(out.join("config.json")).unwrap();
    assert!(snapshot.contains("\"renamed\""));
    assert!(snapshot.contains("\"seed\": 77"));
}
