use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eventrel")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, docs: usize, seed: u64) -> PathBuf {
    let out = p(dir, name);
    ok(&["generate", "--docs", &docs.to_string(), "--seed", &seed.to_string(), "--output", s(&out)]);
    out
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn f1(report: &serde_json::Value, metric: &str) -> f64 {
    report["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["metric"] == metric)
        .unwrap_or_else(|| panic!("no {metric} row"))["f1"]
        .as_f64()
        .unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["score", "--gold", "x.jsonl"]).status.code(), Some(1));

    let dir = TempDir::new().unwrap();
    let missing = p(&dir, "missing.jsonl");
    let out = run(&["train", "--corpus", s(&missing), "--model", s(&p(&dir, "m.json")), "--task", "coref"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));

    let bad = p(&dir, "bad.jsonl");
    fs::write(&bad, "{\"doc_id\": \"d\"}\nnot json\n").unwrap();
    let out = run(&["score", "--gold", s(&bad), "--baseline", "singleton", "--task", "coref"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_train_decode_score() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "train.jsonl", 30, 1);
    let test = generate(&dir, "test.jsonl", 10, 2);
    for task in ["coref", "sequencing"] {
        let model = p(&dir, &format!("{task}.json"));
        let preds = p(&dir, &format!("{task}.pred.jsonl"));
        let json = p(&dir, &format!("{task}.score.json"));
        let log = p(&dir, &format!("{task}.log"));
        ok(&["train", "--corpus", s(&train), "--model", s(&model), "--task", task, "--iterations", "3", "--log", s(&log)]);
        assert_eq!(fs::read_to_string(&log).unwrap().lines().filter(|l| l.starts_with("epoch")).count(), 3);
        ok(&["decode", "--model", s(&model), "--corpus", s(&test), "--output", s(&preds), "--jobs", "2"]);
        assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 10);
        let out = ok(&["score", "--gold", s(&test), "--predictions", s(&preds), "--task", task, "--json", s(&json)]);
        let table = String::from_utf8(out.stdout).unwrap();
        let r = report(&json);
        assert_eq!(r["documents"], 10);
        if task == "coref" {
            assert!(table.contains("AVG"));
            assert!(r["average_f1"].as_f64().unwrap() > 0.0);
        } else {
            assert!(table.contains("TempEval"));
            assert!(f1(&r, "TempEval") > 0.0);
        }
    }
}

#[test]
fn gold_as_predictions_scores_perfectly() {
    let dir = TempDir::new().unwrap();
    let gold = generate(&dir, "gold.jsonl", 8, 5);
    let preds = p(&dir, "preds.jsonl");
    // a gold corpus line carries every field a prediction needs
    let lines: Vec<String> = fs::read_to_string(&gold)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            serde_json::json!({
                "doc_id": v["doc_id"],
                "coref": v["coref"],
                "after": v["after"],
            })
            .to_string()
        })
        .collect();
    fs::write(&preds, lines.join("\n")).unwrap();
    let json = p(&dir, "r.json");
    ok(&["score", "--gold", s(&gold), "--predictions", s(&preds), "--task", "coref", "--json", s(&json)]);
    let r = report(&json);
    for m in ["B3", "CEAF-E", "MUC", "BLANC"] {
        assert_eq!(f1(&r, m), 100.0, "{m}");
    }
    ok(&["score", "--gold", s(&gold), "--predictions", s(&preds), "--task", "sequencing", "--json", s(&json)]);
    assert_eq!(f1(&report(&json), "TempEval"), 100.0);
}

#[test]
fn singleton_baseline_has_zero_muc() {
    let dir = TempDir::new().unwrap();
    let gold = generate(&dir, "gold.jsonl", 10, 9);
    let json = p(&dir, "r.json");
    ok(&["score", "--gold", s(&gold), "--baseline", "singleton", "--task", "coref", "--json", s(&json)]);
    let r = report(&json);
    assert_eq!(f1(&r, "MUC"), 0.0);
    assert_eq!(r["metrics"][0]["precision"], 100.0);
}

#[test]
fn training_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let corpus = generate(&dir, "c.jsonl", 20, 4);
    let models: Vec<String> = (0..2)
        .map(|i| {
            let m = p(&dir, &format!("m{i}.json"));
            ok(&["train", "--corpus", s(&corpus), "--model", s(&m), "--task", "sequencing", "--iterations", "2", "--shuffle", "--seed", "9"]);
            fs::read_to_string(m).unwrap()
        })
        .collect();
    assert_eq!(models[0], models[1]);
    let a = generate(&dir, "a.jsonl", 5, 77);
    let b = generate(&dir, "b.jsonl", 5, 77);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn empty_corpus_gives_empty_predictions() {
    let dir = TempDir::new().unwrap();
    let corpus = generate(&dir, "c.jsonl", 10, 4);
    let model = p(&dir, "m.json");
    ok(&["train", "--corpus", s(&corpus), "--model", s(&model), "--task", "coref", "--iterations", "1"]);
    let empty = p(&dir, "empty.jsonl");
    fs::write(&empty, "").unwrap();
    let preds = p(&dir, "preds.jsonl");
    ok(&["decode", "--model", s(&model), "--corpus", s(&empty), "--output", s(&preds)]);
    assert_eq!(fs::read_to_string(preds).unwrap(), "");
}

#[test]
fn disabled_family_leaves_no_weights() {
    let dir = TempDir::new().unwrap();
    let corpus = p(&dir, "c.jsonl");
    ok(&["generate", "--docs", "20", "--toy-layers", "--output", s(&corpus)]);
    let weights = |name: &str, extra: &[&str]| {
        let m = p(&dir, name);
        let mut args = vec!["train", "--corpus", s(&corpus), "--model", s(&m), "--task", "coref", "--iterations", "2"];
        args.extend_from_slice(extra);
        ok(&args);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(m).unwrap()).unwrap();
        v["weights"].as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    assert!(weights("full.json", &[]).iter().any(|k| k.starts_with("frame")));
    assert!(!weights("ablated.json", &["--disable-family", "frame"]).iter().any(|k| k.starts_with("frame")));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let gold = generate(&dir, "gold.jsonl", 5, 3);
    let cfg = p(&dir, "run.toml");
    fs::write(&cfg, "task = \"coref\"\naggregation = \"macro\"\n").unwrap();
    let json = p(&dir, "r.json");
    ok(&["--config", s(&cfg), "score", "--gold", s(&gold), "--baseline", "matching", "--json", s(&json)]);
    assert_eq!(report(&json)["aggregation"], "macro");

    fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    let out = run(&["--config", s(&cfg), "score", "--gold", s(&gold), "--baseline", "matching"]);
    assert_eq!(out.status.code(), Some(2));
}
