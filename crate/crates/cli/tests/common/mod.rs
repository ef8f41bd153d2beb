//! Helpers shared by the CLI integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

pub fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn mini() -> PathBuf {
    core_fixtures().join("mini")
}

pub fn menorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_menorm"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

/// Run a command and fail loudly on a nonzero exit.
pub fn ok(args: &[&str]) -> Output {
    let out = menorm(args);
    assert!(
        out.status.success(),
        "menorm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub struct PipelineRun {
    pub elapsed: Duration,
    /// stdout of `evaluate` on the test split.
    pub evaluation: serde_json::Value,
}

/// dict -> index (tfidf, dense) -> link -> train-reranker -> rerank -> evaluate, inside `dir`.
pub fn run_pipeline(dir: &Path) -> PipelineRun {
    let start = Instant::now();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let config = mini().join("config.yaml").to_str().unwrap().to_string();
    let dataset = mini().join("dataset.json").to_str().unwrap().to_string();
    ok(&["dict", "--config", &config, "--out", &p("kb.jsonl")]);
    ok(&["index", "--kind", "tfidf", "--kb", &p("kb.jsonl"), "--out", &p("idx_tfidf")]);
    ok(&["index", "--kind", "dense", "--kb", &p("kb.jsonl"), "--out", &p("idx_dense")]);
    ok(&[
        "link", "--index", &p("idx_tfidf"), "--index", &p("idx_dense"), "--dataset", &dataset, "--k", "64", "--kb",
        &p("kb.jsonl"), "--out", &p("cands.jsonl"),
    ]);
    let train = ok(&[
        "train-reranker", "--kb", &p("kb.jsonl"), "--dataset", &dataset, "--candidates", &p("cands.jsonl"), "--seed",
        "42", "--out", &p("model.json"), "--report", &p("train_report.json"),
    ]);
    std::fs::write(dir.join("train_stdout.json"), &train.stdout).unwrap();
    ok(&[
        "rerank", "--kb", &p("kb.jsonl"), "--model", &p("model.json"), "--dataset", &dataset, "--candidates",
        &p("cands.jsonl"), "--split", "test", "--out", &p("reranked.jsonl"),
    ]);
    let eval = ok(&["evaluate", "--gold", &dataset, "--pred", &p("reranked.jsonl"), "--split", "test", "--k", "1,5,64"]);
    std::fs::write(dir.join("evaluation.json"), &eval.stdout).unwrap();
    PipelineRun {
        elapsed: start.elapsed(),
        evaluation: serde_json::from_slice(&eval.stdout).expect("evaluate prints JSON"),
    }
}

/// Every file under `dir` except manifests, keyed by relative path.
pub fn artifacts(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with("manifest.json") {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
