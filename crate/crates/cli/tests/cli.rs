use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sentigraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentigraph"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn demo() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("demo.json")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn generate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["generate", "--users", "50", "--seed", "7", "--out", "g.json"];
    assert!(sentigraph(d, &args).status.success());
    let first = fs::read(d.join("g.json")).unwrap();
    assert!(sentigraph(d, &args).status.success());
    assert_eq!(first, fs::read(d.join("g.json")).unwrap());
    assert!(d.join("g.json.truth.tsv").exists());
    assert!(d.join("g.json.manifest.json").exists());
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = sentigraph(dir.path(), &["frobnicate"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));
    let bad_flag = sentigraph(dir.path(), &["generate", "--out", "g.json", "--nope"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    for args in [&["--help"][..], &["infer", "--help"][..]] {
        let ok = sentigraph(dir.path(), args);
        assert_eq!(ok.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&ok.stdout).contains("Usage"));
    }
}

#[test]
fn validation_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let invalid = sentigraph(d, &["generate", "--tweet-noise", "0.7", "--out", "g.json"]);
    assert_eq!(invalid.status.code(), Some(1));
    let missing = sentigraph(d, &["pagerank", "--graph", "absent.json", "--out", "i.tsv"]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(d.join("broken.json"), "{").unwrap();
    let malformed = sentigraph(d, &["pagerank", "--graph", "broken.json", "--out", "i.tsv"]);
    assert_eq!(malformed.status.code(), Some(1));
}

#[test]
fn evaluate_with_mismatched_ids_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("pred.tsv"), "a\t1\nb\t0\n").unwrap();
    fs::write(d.join("truth.tsv"), "a\t1\nc\t0\n").unwrap();
    let out = sentigraph(d, &["evaluate", "--predictions", "pred.tsv", "--truth", "truth.tsv", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no prediction for \"c\""));
}

#[test]
fn stepwise_commands_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: [&[&str]; 6] = [
        &["generate", "--users", "80", "--seed", "3", "--out", "g.json", "--truth", "truth.tsv"],
        &["pagerank", "--graph", "g.json", "--out", "inf.tsv"],
        &["estimate", "--graph", "g.json", "--out", "p.json"],
        &["train", "--graph", "g.json", "--influence", "inf.tsv", "--out", "tp.json", "--max-steps", "3000", "--trace", "trace.csv"],
        &["infer", "--graph", "g.json", "--influence", "inf.tsv", "--params", "p.json", "--out-dir", "run"],
        &["evaluate", "--predictions", "run/predictions.tsv", "--truth", "truth.tsv", "--eval-set", "run/heldout.tsv", "--out", "report.json"],
    ];
    for args in steps {
        let out = sentigraph(d, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["tp.json.report.json", "trace.csv", "run/marginals.tsv", "run/manifest.json", "report.json.manifest.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let ens = sentigraph(
        d,
        &["infer", "--graph", "g.json", "--influence", "inf.tsv", "--ensemble", "3", "--max-steps", "2000", "--out-dir", "ens"],
    );
    assert!(ens.status.success());
    let even = sentigraph(
        d,
        &["infer", "--graph", "g.json", "--influence", "inf.tsv", "--ensemble", "4", "--out-dir", "ens"],
    );
    assert_eq!(even.status.code(), Some(1));
}

#[test]
fn pipeline_rerun_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = sentigraph(d, &["pipeline", "--config", &demo(), "--out-dir", "out"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "params.json", "predictions.tsv", "report.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let report = fs::read(d.join("out/report.json")).unwrap();
    let predictions = fs::read(d.join("out/predictions.tsv")).unwrap();
    fs::remove_file(d.join("out/report.json")).unwrap();
    fs::remove_file(d.join("out/predictions.tsv")).unwrap();
    assert!(sentigraph(d, &["rerun", "out/manifest.json"]).status.success());
    assert_eq!(report, fs::read(d.join("out/report.json")).unwrap());
    assert_eq!(predictions, fs::read(d.join("out/predictions.tsv")).unwrap());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "pipeline");
    assert_eq!(manifest["seeds"]["graph"], 7);
    assert!(manifest["duration_secs"].is_number());
    assert!(manifest["version"].is_string());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = sentigraph(d, &["pipeline", "--config", &demo(), "--out-dir", "out", "--users", "60", "--seed", "2"]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["pipeline"]["synth"]["n_users"], 60);
    assert_eq!(manifest["seeds"]["graph"], 2);
    assert_eq!(manifest["config"]["pipeline"]["synth"]["topic"], "demo");
}
