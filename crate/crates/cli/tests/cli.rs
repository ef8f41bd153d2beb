mod common;

use common::{artifacts, menorm, mini, ok, run_pipeline};

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let help = ok(&["--help"]);
    assert!(String::from_utf8_lossy(&help.stdout).contains("train-reranker"));
    let version = ok(&["--version"]);
    assert!(String::from_utf8_lossy(&version.stdout).starts_with("menorm "));
}

#[test]
fn usage_errors_are_one_tab_separated_line() {
    let out = menorm(&["link", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error\tusage\t"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn missing_input_reports_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = menorm(&["dict", "--config", "/nonexistent/config.yaml", "--out", dir.path().join("kb").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error\tio\t"), "{}", stderr(&out));
}

#[test]
fn pipeline_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_pipeline(a.path());
    let rb = run_pipeline(b.path());
    let (fa, fb) = (artifacts(a.path()), artifacts(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{} differs between runs", name.display());
    }
    assert!(fa.len() >= 8, "{:?}", fa.keys());
    assert_eq!(ra.evaluation, rb.evaluation);
    assert!(ra.elapsed.as_secs_f64() < 60.0);
}

#[test]
fn evaluate_reports_json_and_table() {
    let dataset = mini().join("dataset.json");
    let d = dataset.to_str().unwrap();
    let out = ok(&["evaluate", "--gold", d, "--pred", d, "--k", "1,5"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["f1_at_1"], 1.0);
    assert_eq!(v["recall_at_k"]["5"], 1.0);
    let table = ok(&["evaluate", "--gold", d, "--pred", d, "--format", "table"]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("recall@64"));
}

#[test]
fn artifacts_from_another_kb_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let config = mini().join("config.yaml");
    let dataset = mini().join("dataset.json");
    ok(&["dict", "--config", config.to_str().unwrap(), "--out", &p("kb.jsonl")]);
    ok(&["index", "--kind", "tfidf", "--kb", &p("kb.jsonl"), "--out", &p("idx")]);

    // A second KB that differs by one alias.
    let raw = std::fs::read_to_string(p("kb.jsonl")).unwrap();
    let mut lines: Vec<String> = raw.lines().map(String::from).collect();
    let mut first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    first["aliases"].as_array_mut().unwrap().push(serde_json::json!({ "value": "extra alias", "lang": "en" }));
    lines[0] = first.to_string();
    std::fs::write(p("other.jsonl"), lines.join("\n") + "\n").unwrap();

    let out = menorm(&[
        "link", "--index", &p("idx"), "--dataset", dataset.to_str().unwrap(), "--kb", &p("other.jsonl"), "--out",
        &p("c.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error\tkb_hash_mismatch\t"), "{}", stderr(&out));

    ok(&[
        "link", "--index", &p("idx"), "--dataset", dataset.to_str().unwrap(), "--kb", &p("kb.jsonl"), "--out",
        &p("c.jsonl"),
    ]);
    let out = menorm(&[
        "train-reranker", "--kb", &p("other.jsonl"), "--dataset", dataset.to_str().unwrap(), "--candidates",
        &p("c.jsonl"), "--out", &p("m.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error\tkb_hash_mismatch\t"), "{}", stderr(&out));
}
