//! Agreement with the reference Schwartz–Hearst implementation.
//! Expected pairs are produced by `oracles/abbrev_oracle.py`.

use menorm::abbrev::extract_pairs;
use serde_json::Value;

fn as_pairs(v: &Value) -> Vec<(String, String)> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|p| (p[0].as_str().unwrap().to_string(), p[1].as_str().unwrap().to_string()))
        .collect()
}

fn ours(text: &str) -> Vec<(String, String)> {
    extract_pairs(text)
        .into_iter()
        .map(|p| (p.short_form, p.long_form))
        .collect()
}

#[test]
fn fixture_matches_reference_pairs() {
    let raw = include_str!("fixtures/abbrev_sentences.txt");
    let expected: Value = serde_json::from_str(include_str!("fixtures/abbrev_expected.json")).unwrap();
    let lines: Vec<&str> = raw.trim_end_matches('\n').split('\n').collect();
    let per = expected["per_sentence"].as_array().unwrap();
    assert_eq!(lines.len(), 30);
    assert_eq!(per.len(), lines.len());
    for (line, exp) in lines.iter().zip(per) {
        assert_eq!(ours(line), as_pairs(exp), "sentence: {line}");
    }
    assert_eq!(ours(raw), as_pairs(&expected["document"]));
}
