use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use careergraph::corpus::{load_resumes, DescriptionTable, Label, Vocabularies};
use careergraph::graph::{build_global_graph, GraphConfig, GraphDocument, HeteroGraph};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_careergraph"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn labels(path: &Path) -> Vec<Label> {
    let mut vocab = Vocabularies::default();
    load_resumes(path, None, &mut vocab).unwrap().into_iter().map(|r| r.label).collect()
}

/// A directory holding 60 oracle resumes (`real.jsonl`) and 60 random fakes
/// (`random.jsonl`).
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--method", "markov_real", "--count", "60", "--seed", "1", "--out", "real.jsonl"]);
    ok(
        dir.path(),
        &["generate", "--method", "random", "--count", "60", "--seed", "2", "--corpus", "real.jsonl", "--out", "random.jsonl"],
    );
    dir
}

const QUICK: [&str; 6] = ["--dim", "8", "--epochs", "2", "--desc-dim", "8"];

#[test]
fn generate_writes_labeled_corpora() {
    let dir = workspace();
    assert!(labels(&dir.path().join("real.jsonl")).iter().all(|&l| l == Label::Human));
    ok(
        dir.path(),
        &["generate", "--method", "swapping", "--count", "100", "--seed", "7", "--corpus", "real.jsonl", "--out", "s.jsonl"],
    );
    let l = labels(&dir.path().join("s.jsonl"));
    assert_eq!(l.len(), 100);
    assert!(l.iter().all(|&l| l == Label::Synthetic));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.jsonl.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert!(meta["tool_version"].is_string());
}

#[test]
fn swapping_without_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["generate", "--method", "swapping", "--count", "100", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--corpus"));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_flags_and_config_keys_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["train", "--bogus"]).status.code(), Some(1));
    std::fs::write(dir.path().join("c.json"), r#"{"reel": "x.jsonl"}"#).unwrap();
    assert_eq!(run(dir.path(), &["train", "--config", "c.json"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["stats", "nowhere.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn build_graph_defaults_and_round_trip() {
    let dir = workspace();
    ok(dir.path(), &["build-graph", "--real", "real.jsonl", "--out", "g.json"]);
    let doc: GraphDocument = serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(doc.meta.tau, 0.9);
    assert_eq!(doc.meta.resume_count, 60);
    assert!(doc.meta.config_hash.is_some() && doc.meta.tool_version.is_some());

    let mut vocab = Vocabularies::default();
    let real = load_resumes(&dir.path().join("real.jsonl"), None, &mut vocab).unwrap();
    let desc = DescriptionTable::from_title_names(&vocab.titles, 32).unwrap();
    let in_memory = build_global_graph(&real, &desc, &GraphConfig::default()).unwrap();
    assert_eq!(HeteroGraph::from_document(&doc).unwrap(), in_memory);
}

#[test]
fn build_graph_rejects_synthetic_resumes() {
    let dir = workspace();
    let out = run(dir.path(), &["build-graph", "--real", "random.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("poisoned"));
    assert!(out.stdout.is_empty());
}

#[test]
fn stats_is_one_json_document() {
    let dir = workspace();
    let text = ok(dir.path(), &["stats", "real.jsonl", "random.jsonl"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["corpora"]["real.jsonl"]["resume_count"], 60);
    assert!(v["corpora"]["random.jsonl"]["transition_count"].as_f64().unwrap() > 0.0);
}

fn train(dir: &Path, out: &str) -> PathBuf {
    let mut args = vec!["train", "--real", "real.jsonl", "--fake", "random=random.jsonl", "--seed", "3", "--out", out];
    args.extend(QUICK);
    ok(dir, &args);
    dir.join(out)
}

#[test]
fn train_is_deterministic_and_evaluate_reports_the_hash() {
    let dir = workspace();
    let a = train(dir.path(), "a");
    let b = train(dir.path(), "b");
    for f in ["model.ckpt", "metrics.json", "train_log.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ckpt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("model.ckpt")).unwrap()).unwrap();
    assert_eq!(ckpt["seed"], 3);

    ok(dir.path(), &["evaluate", "--checkpoint", "a/model.ckpt", "--test", "random.jsonl", "--out", "m.json"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["spec_hash"], ckpt["config_hash"]);
    assert_eq!(m["n_test"], 60);
    assert_eq!(m["seed"], 3);
    for key in ["f1_positive", "f1_micro", "precision", "recall", "confusion", "tool_version"] {
        assert!(m.get(key).is_some(), "{key}");
    }
}

#[test]
fn config_file_and_flags_combine() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"real": "real.jsonl", "fakes": {"random": "random.jsonl"}, "desc_dim": 8, "seed": 3,
            "run": {"model": {"d": 8, "epochs": 5}}}"#,
    )
    .unwrap();
    ok(dir.path(), &["train", "--config", "c.json", "--epochs", "2", "--out", "c"]);
    let a = train(dir.path(), "a");
    assert_eq!(
        std::fs::read(a.join("model.ckpt")).unwrap(),
        std::fs::read(dir.path().join("c/model.ckpt")).unwrap()
    );
}

#[test]
fn ablate_layers_gives_seven_rows() {
    let dir = workspace();
    let mut args = vec!["ablate", "--family", "layers", "--real", "real.jsonl", "--fake", "random=random.jsonl", "--seeds", "1"];
    args.extend(QUICK);
    args.extend(["--out", "abl"]);
    let csv = ok(dir.path(), &args);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    let settings: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(settings, ["JT", "C", "JD", "JT+C", "JT+JD", "JT+C+JD", "All"]);
    assert_eq!(std::fs::read_to_string(dir.path().join("abl/ablation_layers.csv")).unwrap(), csv);
    assert!(dir.path().join("abl/ablation_layers.json").exists());
}
