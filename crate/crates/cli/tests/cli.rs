use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_xlingevent"));
    c.env("SOURCE_DATE_EPOCH", "1700000000");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pipeline").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn version_prints_semver() {
    let out = ok(&["--version"]);
    assert_eq!(out.trim(), format!("xlingevent {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = run(&["score-coref", "--gold", "g", "--pred", "p", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["score-coref", "--gold", "/nonexistent/g.jsonl", "--pred", "/nonexistent/p.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": \"a\", \"pred_clusters\": [[1]]}\nnot json\n").unwrap();
    let out = run(&["score-coref", "--gold", s(&bad), "--pred", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"));
    let out = run(&["cluster", "--scores", s(&fixture("pair_scores.jsonl")), "--threshold", "1.5", "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identity_coref_scores_one() {
    let gold = fixture("coref_gold.jsonl");
    let out = ok(&["score-coref", "--gold", s(&gold), "--pred", s(&gold)]);
    assert!(out.contains("conll_avg 1.0000"), "{out}");
    let out = ok(&["score-coref", "--gold", s(&gold), "--pred", s(&gold), "--macro"]);
    assert!(out.contains("conll_avg 1.0000"), "{out}");
}

#[test]
fn missing_prediction_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.jsonl");
    fs::write(&pred, "{\"id\":\"d1\",\"pred_clusters\":[[1,2,3,4,5]]}\n").unwrap();
    let out = run(&["score-coref", "--gold", s(&fixture("coref_gold.jsonl")), "--pred", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d2"));
}

/// Runs align → translate → decode → cluster → score into `dir`.
fn pipeline(dir: &Path, threads: &str) -> Vec<PathBuf> {
    let map = dir.join("map.txt");
    let es = dir.join("es.bio");
    let dec = dir.join("decoded.bio");
    let pred = dir.join("pred.jsonl");
    let score = dir.join("score.json");
    let t = ["--threads", threads];
    ok(&[&t[..], &["align", "--src-emb", s(&fixture("en.vec")), "--tgt-emb", s(&fixture("es.vec")), "--seed-dict", s(&fixture("seed.tsv")), "--src-lang", "en", "--tgt-lang", "es", "--out", s(&map)]].concat());
    ok(&[&t[..], &["translate", "--in", s(&fixture("en.bio")), "--src-emb", s(&fixture("en.vec")), "--tgt-emb", s(&fixture("es.vec")), "--mapping", s(&map), "--scheme", s(&fixture("scheme.json")), "--out", s(&es)]].concat());
    ok(&[&t[..], &["decode", "--scores", s(&fixture("token_scores.txt")), "--tokens", s(&es), "--scheme", s(&fixture("scheme.json")), "--out", s(&dec)]].concat());
    ok(&[&t[..], &["cluster", "--scores", s(&fixture("pair_scores.jsonl")), "--out", s(&pred)]].concat());
    let printed = ok(&[&t[..], &["score-coref", "--gold", s(&fixture("coref_gold.jsonl")), "--pred", s(&pred), "--out", s(&score)]].concat());
    let printed_path = dir.join("score.txt");
    fs::write(&printed_path, printed).unwrap();
    vec![map, es, dec, pred, score, printed_path]
}

#[test]
fn pipeline_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let outputs = pipeline(dir.path(), "2");
    assert_eq!(read(&outputs[1]), read(&fixture("golden_translated.bio")));
    assert_eq!(read(&outputs[2]), read(&fixture("golden_decoded.bio")));
    assert_eq!(read(&outputs[3]), read(&fixture("golden_clusters.jsonl")));
    assert_eq!(read(&outputs[5]), read(&fixture("golden_score.txt")));
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_threads() {
    let runs: Vec<(tempfile::TempDir, Vec<PathBuf>)> = ["1", "1", "8"]
        .iter()
        .map(|t| {
            let d = tempfile::tempdir().unwrap();
            let outs = pipeline(d.path(), t);
            (d, outs)
        })
        .collect();
    for (_, outs) in &runs[1..] {
        for (a, b) in runs[0].1.iter().zip(outs) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.file_name().unwrap().to_string_lossy());
        }
    }
}

#[test]
fn run_metadata_records_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred.jsonl");
    let scores = fixture("pair_scores.jsonl");
    ok(&["cluster", "--scores", s(&scores), "--threshold", "0.6", "--out", s(&out)]);
    let meta: Value = serde_json::from_str(&read(&dir.path().join("pred.jsonl.meta.json"))).unwrap();
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["command"], "cluster");
    assert_eq!(meta["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["threshold"], 0.6);
    assert_eq!(meta["timestamp"], "2023-11-14T22:13:20Z");
    let digest = meta["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn split_and_combine() {
    let dir = tempfile::tempdir().unwrap();
    let docs = fixture("docs.jsonl");
    let (tr, va) = (dir.path().join("train.jsonl"), dir.path().join("valid.jsonl"));
    ok(&["split", "--in", s(&docs), "--fraction", "0.8", "--seed", "4", "--train-out", s(&tr), "--valid-out", s(&va)]);
    let (a, b) = (read(&tr), read(&va));
    assert_eq!((a.lines().count(), b.lines().count()), (32, 8));
    ok(&["split", "--in", s(&docs), "--fraction", "0.8", "--seed", "4", "--train-out", s(&tr), "--valid-out", s(&va)]);
    assert_eq!((read(&tr), read(&va)), (a, b));

    let out = dir.path().join("all.jsonl");
    ok(&["combine", "--in", s(&tr), s(&va), "--out", s(&out)]);
    assert_eq!(read(&out).lines().count(), 40);
}

#[test]
fn knn_lists_neighbours() {
    let out = ok(&["knn", "--emb", s(&fixture("en.vec")), "--word", "strike", "--k", "3"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("strike\t1.0000"));
    let missing = run(&["knn", "--emb", s(&fixture("en.vec")), "--word", "zzz"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn head_predictions_match_golden_run() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let pred = dir.path().join("pred.jsonl");
    let (emb, docs) = (fixture("docs.vec"), fixture("docs.jsonl"));
    ok(&["train-head", "--emb", s(&emb), "--labels", s(&docs), "--hidden", "8,4", "--epochs", "50", "--lr", "0.05", "--seed", "3", "--out", s(&model)]);
    ok(&["predict", "--model", s(&model), "--emb", s(&emb), "--in", s(&docs), "--out", s(&pred)]);
    assert_eq!(read(&pred), read(&fixture("golden_head_predictions.jsonl")));
    let history: Value = serde_json::from_str(&read(&dir.path().join("model.json.history.json"))).unwrap();
    assert!(history["best_epoch"].as_u64().is_some());
    let printed = ok(&["score-cls", "--gold", s(&docs), "--pred", s(&pred), "--beta", "0.6"]);
    assert!(printed.starts_with("positive P"), "{printed}");
}

#[test]
fn coref_scorer_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("pairs.json");
    let scores = dir.path().join("scores.jsonl");
    let clusters = dir.path().join("clusters.jsonl");
    let (emb, gold) = (fixture("sentences.vec"), fixture("coref_gold.jsonl"));
    ok(&["train-head", "--emb", s(&emb), "--labels", s(&gold), "--kind", "coref", "--valid-frac", "0.25", "--hidden", "8", "--beta", "0.6", "--out", s(&model)]);
    ok(&["predict", "--model", s(&model), "--emb", s(&emb), "--in", s(&gold), "--kind", "coref", "--out", s(&scores)]);
    ok(&["cluster", "--scores", s(&scores), "--out", s(&clusters)]);
    let out = ok(&["score-coref", "--gold", s(&gold), "--pred", s(&clusters)]);
    assert!(out.contains("conll_avg"));
}
