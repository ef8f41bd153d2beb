//! Schwartz–Hearst abbreviation definition detection.
//!
//! A faithful port of the widely used reference implementation, including its
//! quirks, so results agree pair for pair:
//!
//! * every line is a sentence; text is processed in Unicode code points;
//! * a sentence with unbalanced parentheses, or whose first `)` precedes its
//!   first `(`, yields nothing;
//! * a short form sits in `" (" ... ")"`, where `;` and `:` also close;
//! * an empty parenthetical aborts the rest of its sentence;
//! * when a short form is defined several times, the most frequent long form
//!   wins, ties going to the earliest.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::datamodel::Dataset;

static QUOTES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"([(])['"\p{Pi}]|['"\p{Pf}]([);:])"#).expect("valid regex"));
static TOKEN_SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\s\-]+").expect("valid regex"));
static LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{L}").expect("valid regex"));
static ALNUM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[\p{L}\p{N}]+$").expect("valid regex"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbbreviationPair {
    pub short_form: String,
    pub long_form: String,
}

/// Why a candidate was dropped; mirrors the reference's exception paths.
#[derive(Debug)]
struct Omit;

fn is_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

fn is_alnum(s: &str) -> bool {
    ALNUM.is_match(s)
}

fn lower(c: char) -> String {
    c.to_lowercase().collect()
}

fn strip(s: &str) -> &str {
    s.trim_matches(is_space)
}

fn split_ws(s: &str) -> Vec<&str> {
    s.split(is_space).filter(|t| !t.is_empty()).collect()
}

/// `s[start:stop]` with clamping, over code points.
fn slice(chars: &[char], start: usize, stop: usize) -> String {
    let stop = stop.min(chars.len());
    if start >= stop {
        String::new()
    } else {
        chars[start..stop].iter().collect()
    }
}

/// Shrink `[start, stop)` past surrounding whitespace.
fn trim_bounds(chars: &[char], mut start: usize, mut stop: usize) -> (usize, usize) {
    let stop_c = stop.min(chars.len());
    if start >= stop_c {
        return (start, stop);
    }
    let seg = &chars[start..stop_c];
    let lead = seg.iter().take_while(|c| is_space(**c)).count();
    if lead == seg.len() {
        // Entirely whitespace: lstrip and rstrip both consume everything.
        return (start + lead, stop - lead);
    }
    let trail = seg.iter().rev().take_while(|c| is_space(**c)).count();
    start += lead;
    stop -= trail;
    (start, stop)
}

struct ShortForm {
    text: String,
    start: usize,
}

fn conditions(candidate: &[char]) -> Result<bool, Omit> {
    let s: String = candidate.iter().collect();
    let mut viable = !(candidate.len() < 2 || candidate.len() > 10);
    if split_ws(&s).len() > 2 || !LETTER.is_match(&s) {
        viable = false;
    }
    // Indexing the first character of an empty candidate raises in the reference.
    let first = candidate.first().ok_or(Omit)?;
    if !is_alnum(&first.to_string()) {
        viable = false;
    }
    Ok(viable)
}

/// Short-form candidates of one sentence. `Err` aborts the remainder.
fn best_candidates(sentence: &[char]) -> Vec<Result<ShortForm, Omit>> {
    let mut out = Vec::new();
    if !sentence.contains(&'(') {
        return out;
    }
    let count = |ch| sentence.iter().filter(|c| **c == ch).count();
    if count('(') != count(')') {
        return out;
    }
    let first_open = sentence.iter().position(|c| *c == '(');
    let first_close = sentence.iter().position(|c| *c == ')');
    if first_open > first_close {
        return out;
    }

    let find_open = |from: usize| (from..sentence.len().saturating_sub(1)).find(|&i| sentence[i] == ' ' && sentence[i + 1] == '(');
    let mut close: isize = -1;
    loop {
        let Some(open) = find_open((close + 1) as usize) else { break };
        let open = open + 1;
        let mut idx = open + 1;
        let mut depth = 1;
        let mut skip = false;
        while depth > 0 {
            let Some(&ch) = sentence.get(idx) else {
                skip = true;
                break;
            };
            if ch == '(' {
                depth += 1;
            } else if matches!(ch, ')' | ';' | ':') {
                depth -= 1;
            }
            idx += 1;
        }
        if skip {
            close = (open + 1) as isize;
            continue;
        }
        close = idx as isize;
        let (start, stop) = trim_bounds(sentence, open + 1, idx - 1);
        let cand: Vec<char> = if start < stop { sentence[start..stop].to_vec() } else { Vec::new() };
        match conditions(&cand) {
            Ok(true) => out.push(Ok(ShortForm {
                text: cand.iter().collect(),
                start,
            })),
            Ok(false) => {}
            Err(e) => {
                out.push(Err(e));
                return out;
            }
        }
    }
    out
}

/// Python-style `len(' '.join(tokens[:end]))` with a possibly negative `end`.
fn joined_len(tokens: &[String], end: isize) -> usize {
    let n = tokens.len() as isize;
    let end = if end < 0 { (n + end).max(0) } else { end.min(n) } as usize;
    if end == 0 {
        return 0;
    }
    tokens[..end].iter().map(|t| t.chars().count()).sum::<usize>() + end - 1
}

fn get_definition(sf: &ShortForm, sentence: &[char]) -> Result<(usize, usize), Omit> {
    let prefix: String = sentence[..sf.start - 2].iter().collect::<String>().to_lowercase();
    let tokens: Vec<String> = TOKEN_SPLIT.split(&prefix).map(str::to_string).collect();
    let key = lower(sf.text.chars().next().ok_or(Omit)?);
    let first_chars: Vec<String> = tokens
        .iter()
        .filter_map(|t| t.chars().next())
        .map(|c| c.to_string())
        .collect();
    let definition_freq = first_chars.iter().filter(|c| **c == key).count();
    let candidate_freq = sf.text.to_lowercase().matches(key.as_str()).count();
    if candidate_freq > definition_freq {
        return Err(Omit);
    }

    let n = first_chars.len() as isize;
    let mut count = 0;
    let mut start: isize = 0;
    let mut start_index: isize = n - 1;
    while count < candidate_freq {
        if start.abs() > n {
            return Err(Omit);
        }
        start -= 1;
        // list.index(key, n + start): a negative bound counts from the end again.
        let mut from = n + start;
        if from < 0 {
            from = (n + from).max(0);
        }
        if let Some(p) = first_chars.iter().skip(from as usize).position(|c| *c == key) {
            start_index = from + p as isize;
        }
        let from = if start_index < 0 { (n + start_index).max(0) } else { start_index } as usize;
        count = first_chars[from.min(first_chars.len())..].iter().filter(|c| **c == key).count();
    }

    let begin = joined_len(&tokens, start_index);
    let stop = sf.start - 1;
    Ok(trim_bounds(sentence, begin, stop))
}

/// Resolve a Python negative index into a slice of length `len`.
fn at<T: Copy>(items: &[T], i: isize) -> Result<T, Omit> {
    let n = items.len() as isize;
    if i < -n || i >= 0 {
        return Err(Omit);
    }
    Ok(items[(n + i) as usize])
}

fn select_definition(definition: &[char], abbrev: &[char]) -> Result<String, Omit> {
    if definition.len() < abbrev.len() {
        return Err(Omit);
    }
    let def_str: String = definition.iter().collect();
    let abbrev_str: String = abbrev.iter().collect();
    if split_ws(&def_str).contains(&abbrev_str.as_str()) {
        return Err(Omit);
    }
    let (dl, al) = (definition.len() as isize, abbrev.len() as isize);
    let (mut s, mut l): (isize, isize) = (-1, -1);
    loop {
        let long_char = lower(at(definition, l)?);
        let short_char = lower(at(abbrev, s)?);
        if !is_alnum(&short_char) {
            s -= 1;
        }
        if s == -al {
            if short_char == long_char {
                if l == -dl || !is_alnum(&at(definition, l - 1)?.to_string()) {
                    break;
                }
                l -= 1;
            } else {
                l -= 1;
                if l == -(dl + 1) {
                    return Err(Omit);
                }
            }
        } else if short_char == long_char {
            s -= 1;
            l -= 1;
        } else {
            l -= 1;
        }
    }

    let long: String = definition[(dl + l) as usize..].iter().collect();
    let tokens = split_ws(&long).len();
    let length = abbrev.len();
    if tokens > (length + 5).min(length * 2) {
        return Err(Omit);
    }
    if long.matches('(').count() != long.matches(')').count() {
        return Err(Omit);
    }
    Ok(long)
}

fn clean(sentence: &str) -> String {
    QUOTES.replace_all(sentence, "${1}${2}").into_owned()
}

/// Every detected (short, long) occurrence in text order, before deduplication.
pub fn detect_occurrences(text: &str) -> Vec<AbbreviationPair> {
    let mut out = Vec::new();
    for line in text.split('\n') {
        let sentence: Vec<char> = clean(strip(line)).chars().collect();
        for cand in best_candidates(&sentence) {
            let Ok(sf) = cand else { break };
            let Ok((start, stop)) = get_definition(&sf, &sentence) else { continue };
            let definition: Vec<char> = slice(&sentence, start, stop).chars().collect();
            let abbrev: Vec<char> = sf.text.chars().collect();
            if let Ok(long_form) = select_definition(&definition, &abbrev) {
                out.push(AbbreviationPair {
                    short_form: sf.text,
                    long_form,
                });
            }
        }
    }
    out
}

/// One pair per short form, choosing its most frequent long form (earliest on ties).
/// Pairs are ordered by the first appearance of the short form.
pub fn extract_pairs(text: &str) -> Vec<AbbreviationPair> {
    let mut order: Vec<String> = Vec::new();
    let mut defs: HashMap<String, Vec<String>> = HashMap::new();
    for p in detect_occurrences(text) {
        if !defs.contains_key(&p.short_form) {
            order.push(p.short_form.clone());
        }
        defs.entry(p.short_form).or_default().push(p.long_form);
    }
    order
        .into_iter()
        .map(|sf| {
            let longs = &defs[&sf];
            let mut best: Option<(&String, usize)> = None;
            let mut seen: Vec<&String> = Vec::new();
            for l in longs {
                if seen.contains(&l) {
                    continue;
                }
                seen.push(l);
                let n = longs.iter().filter(|x| *x == l).count();
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((l, n));
                }
            }
            AbbreviationPair {
                long_form: best.expect("at least one definition").0.clone(),
                short_form: sf,
            }
        })
        .collect()
}

/// Attach long forms to mentions whose text equals a short form defined in the
/// same document. Existing long forms survive when nothing is detected.
pub fn expand_abbreviations(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for docs in out.splits.values_mut() {
        for doc in docs.iter_mut() {
            let text = doc.passages.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n");
            let pairs = extract_pairs(&text);
            if pairs.is_empty() {
                continue;
            }
            for m in doc.mentions.iter_mut() {
                if let Some(p) = pairs.iter().find(|p| p.short_form == m.text) {
                    m.long_form = Some(p.long_form.clone());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::from_ner_spans;

    fn pairs(text: &str) -> Vec<(String, String)> {
        extract_pairs(text)
            .into_iter()
            .map(|p| (p.short_form, p.long_form))
            .collect()
    }

    #[test]
    fn classic_definition() {
        assert_eq!(
            pairs("Patients with systemic lupus erythematosus (SLE) were included."),
            [("SLE".to_string(), "systemic lupus erythematosus".to_string())]
        );
    }

    #[test]
    fn conjunction_in_parentheses_is_not_an_abbreviation() {
        assert!(pairs("Fever (and) cough were reported.").is_empty());
    }

    #[test]
    fn no_parentheses_no_pairs() {
        assert!(pairs("Nothing to see here.").is_empty());
    }

    #[test]
    fn unbalanced_sentence_is_skipped() {
        assert!(pairs("heart failure (HF) was common (").is_empty());
    }

    #[test]
    fn empty_parenthetical_aborts_rest_of_sentence() {
        assert_eq!(pairs("heart failure (HF) foo ( ) and renal failure (RF)").len(), 1);
    }

    #[test]
    fn quotes_inside_parentheses_are_cleaned() {
        assert_eq!(
            pairs("computed tomography (\"CT\") was used"),
            [("CT".to_string(), "computed tomography".to_string())]
        );
    }

    #[test]
    fn most_frequent_definition_wins() {
        let text = "alpha beta (AB)\nalpha bravo (AB)\nalpha bravo (AB)";
        assert_eq!(pairs(text), [("AB".to_string(), "alpha bravo".to_string())]);
    }

    #[test]
    fn mentions_receive_long_forms_idempotently() {
        let text = "Patients with systemic lupus erythematosus (SLE). SLE is chronic.";
        let doc = from_ner_spans("d", text, &[(44, 47, "DISO"), (50, 53, "DISO")]).unwrap();
        let ds = Dataset::single("test", vec![doc]);
        let once = expand_abbreviations(&ds);
        for m in &once.splits["test"][0].mentions {
            assert_eq!(m.long_form.as_deref(), Some("systemic lupus erythematosus"));
        }
        assert_eq!(expand_abbreviations(&once), once);
    }

    #[test]
    fn dataset_without_parentheses_unchanged() {
        let doc = from_ner_spans("d", "fever and cough", &[(0, 5, "DISO")]).unwrap();
        let ds = Dataset::single("test", vec![doc]);
        assert_eq!(expand_abbreviations(&ds), ds);
    }
}
