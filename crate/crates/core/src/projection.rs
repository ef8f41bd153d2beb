//! Marker-based label projection through machine translation.
//!
//! Each contiguous mention is wrapped in `[` `]` before translation; brackets
//! and backslashes already in the text are escaped with `\`. After
//! translation the markers are parsed back into spans, and concept labels are
//! inherited strictly by marker order. Any defect (unbalanced or nested
//! markers, wrong marker count, empty marker) discards the affected entities
//! rather than guessing an alignment.
//!
//! Overlapping mentions are split into layers of non-overlapping mentions, one
//! translation pass per layer. The first layer fixes the target text; a later
//! layer whose clean text differs loses its entities. Discontiguous mentions
//! cannot be marked and are always counted as lost.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, Document, Mention, Passage, Span};
use crate::error::{Error, Result};
use crate::http::{self, RetryPolicy};
use crate::text::CharIndexed;

pub const OPEN: char = '[';
pub const CLOSE: char = ']';
pub const ESCAPE: char = '\\';
/// Environment variable holding the remote translation endpoint URL.
pub const TRANSLATE_ENDPOINT_ENV: &str = "MENORM_TRANSLATE_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedText {
    pub text: String,
    /// Mention ids in marker order.
    pub origin_mention_ids: Vec<String>,
    /// Number of pre-existing `[`, `]` or `\` characters that were escaped.
    pub escaped: usize,
}

fn push_escaped(out: &mut String, s: &str) -> usize {
    let mut n = 0;
    for c in s.chars() {
        if matches!(c, OPEN | CLOSE | ESCAPE) {
            out.push(ESCAPE);
            n += 1;
        }
        out.push(c);
    }
    n
}

/// Wrap non-overlapping `(start, end, id)` spans of `text` in markers.
pub fn insert_markers(text: &str, spans: &[(usize, usize, &str)]) -> Result<MarkedText> {
    let idx = CharIndexed::new(text);
    let mut sorted: Vec<&(usize, usize, &str)> = spans.iter().collect();
    sorted.sort_by_key(|(s, e, _)| (*s, *e));
    let mut out = MarkedText {
        text: String::new(),
        origin_mention_ids: Vec::new(),
        escaped: 0,
    };
    let mut pos = 0;
    for (s, e, id) in sorted {
        if *s < pos || s > e {
            return Err(Error::OverlappingMentions(format!("span ({s}, {e}) of mention {id}")));
        }
        let (before, inner) = match (idx.slice(pos, *s), idx.slice(*s, *e)) {
            (Some(b), Some(i)) => (b, i),
            _ => {
                return Err(Error::Span {
                    document: String::new(),
                    mention: id.to_string(),
                    message: format!("span ({s}, {e}) outside text of length {}", idx.len()),
                })
            }
        };
        out.escaped += push_escaped(&mut out.text, before);
        out.text.push(OPEN);
        out.escaped += push_escaped(&mut out.text, inner);
        out.text.push(CLOSE);
        out.origin_mention_ids.push(id.to_string());
        pos = *e;
    }
    out.escaped += push_escaped(&mut out.text, idx.slice(pos, idx.len()).unwrap_or(""));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryFailure {
    Unbalanced,
    Nested,
    CountMismatch,
    EmptyMarker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovered {
    pub text: String,
    pub spans: Vec<Span>,
}

/// Strip markers and resolve escapes; spans are character offsets into the
/// clean text, trimmed of whitespace the translator placed inside markers.
pub fn recover_spans(translated: &str, expected_pairs: usize) -> std::result::Result<Recovered, RecoveryFailure> {
    let mut text: Vec<char> = Vec::new();
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    let mut chars = translated.chars();
    while let Some(c) = chars.next() {
        match c {
            ESCAPE => text.push(chars.next().unwrap_or(ESCAPE)),
            OPEN if open.is_some() => return Err(RecoveryFailure::Nested),
            OPEN => open = Some(text.len()),
            CLOSE => {
                let start = open.take().ok_or(RecoveryFailure::Unbalanced)?;
                let mut s = start;
                let mut e = text.len();
                while s < e && text[s].is_whitespace() {
                    s += 1;
                }
                while e > s && text[e - 1].is_whitespace() {
                    e -= 1;
                }
                if s == e {
                    return Err(RecoveryFailure::EmptyMarker);
                }
                spans.push(Span::new(s, e));
            }
            c => text.push(c),
        }
    }
    if open.is_some() {
        return Err(RecoveryFailure::Unbalanced);
    }
    if spans.len() != expected_pairs {
        return Err(RecoveryFailure::CountMismatch);
    }
    Ok(Recovered {
        text: text.into_iter().collect(),
        spans,
    })
}

pub trait Translator: Sync {
    fn translate(&self, texts: &[String]) -> Result<Vec<String>>;
}

/// Adapts a per-text function.
pub struct FnTranslator<F>(pub F);

impl<F: Fn(&str) -> Result<String> + Sync> Translator for FnTranslator<F> {
    fn translate(&self, texts: &[String]) -> Result<Vec<String>> {
        texts.iter().map(|t| (self.0)(t)).collect()
    }
}

/// POST `{"texts": [...]}` → `{"texts": [...]}`.
pub struct RemoteTranslator {
    pub endpoint: String,
    pub retry: RetryPolicy,
}

#[derive(Serialize, Deserialize)]
struct Texts {
    texts: Vec<String>,
}

impl RemoteTranslator {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_env() -> Result<Self> {
        std::env::var(TRANSLATE_ENDPOINT_ENV)
            .map(Self::new)
            .map_err(|_| Error::Config(format!("remote translator needs {TRANSLATE_ENDPOINT_ENV} to be set")))
    }
}

impl Translator for RemoteTranslator {
    fn translate(&self, texts: &[String]) -> Result<Vec<String>> {
        let r: Texts = http::post_json(
            &http::agent(&self.retry),
            &self.endpoint,
            &Texts { texts: texts.to_vec() },
            &self.retry,
        )?;
        if r.texts.len() != texts.len() {
            return Err(Error::Transport {
                attempts: 1,
                message: format!("{} translations for {} texts", r.texts.len(), texts.len()),
            });
        }
        Ok(r.texts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FailureKind {
    Recovery { defect: RecoveryFailure },
    /// A later pass recovered, but to different text than the first pass.
    TextDivergence,
    Translation { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub document: String,
    pub pass: usize,
    pub failure: FailureKind,
    pub entities: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub entities_in: usize,
    pub entities_out: usize,
    pub lost: usize,
    pub loss_percent: f64,
    pub discontiguous: usize,
    pub escaped_characters: usize,
    pub failed_documents: Vec<String>,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone)]
pub struct ProjectionOptions {
    /// When the first pass fails, fall back to the first pass that recovers
    /// instead of discarding the whole document.
    pub salvage_partial: bool,
    pub max_in_flight: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            salvage_partial: false,
            max_in_flight: 4,
        }
    }
}

/// Greedy layering: each mention goes to the first layer it does not overlap.
fn layers(mentions: &[&Mention]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..mentions.len()).collect();
    let bounds = |i: usize| (mentions[i].spans[0].start, mentions[i].spans[0].end);
    order.sort_by_key(|&i| {
        let (s, e) = bounds(i);
        (s, std::cmp::Reverse(e), i)
    });
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut ends: Vec<usize> = Vec::new();
    for i in order {
        let (s, e) = bounds(i);
        match ends.iter().position(|end| *end <= s) {
            Some(l) => {
                out[l].push(i);
                ends[l] = e;
            }
            None => {
                out.push(vec![i]);
                ends.push(e);
            }
        }
    }
    out
}

struct DocOutcome {
    document: Option<Document>,
    entities_in: usize,
    entities_out: usize,
    discontiguous: usize,
    escaped: usize,
    failures: Vec<FailureRecord>,
    failed: bool,
}

fn project_document(doc: &Document, translator: &dyn Translator, opts: &ProjectionOptions) -> Result<DocOutcome> {
    let text = doc.text();
    let contiguous: Vec<&Mention> = doc.mentions.iter().filter(|m| m.spans.len() == 1).collect();
    let mut outcome = DocOutcome {
        document: None,
        entities_in: doc.mentions.len(),
        entities_out: 0,
        discontiguous: doc.mentions.len() - contiguous.len(),
        escaped: 0,
        failures: Vec::new(),
        failed: false,
    };
    let mut passes = layers(&contiguous);
    if passes.is_empty() {
        passes.push(Vec::new());
    }
    let mut marked = Vec::with_capacity(passes.len());
    for layer in &passes {
        let spans: Vec<(usize, usize, &str)> = layer
            .iter()
            .map(|&i| (contiguous[i].spans[0].start, contiguous[i].spans[0].end, contiguous[i].id.as_str()))
            .collect();
        let mut m = insert_markers(&text, &spans)?;
        // Marker order follows span order; map back to layer indices.
        let mut sorted = layer.clone();
        sorted.sort_by_key(|&i| (contiguous[i].spans[0].start, contiguous[i].spans[0].end));
        m.origin_mention_ids = sorted.iter().map(|&i| contiguous[i].id.clone()).collect();
        outcome.escaped += m.escaped;
        marked.push((m, sorted));
    }
    outcome.escaped /= passes.len();

    let inputs: Vec<String> = marked.iter().map(|(m, _)| m.text.clone()).collect();
    let translated = match translator.translate(&inputs) {
        Ok(t) if t.len() == inputs.len() => t,
        Ok(t) => {
            return Ok(fail_all(outcome, doc, format!("{} outputs for {} inputs", t.len(), inputs.len())));
        }
        Err(e) => return Ok(fail_all(outcome, doc, e.to_string())),
    };

    let recovered: Vec<std::result::Result<Recovered, RecoveryFailure>> = translated
        .iter()
        .zip(&marked)
        .map(|(t, (m, _))| recover_spans(t, m.origin_mention_ids.len()))
        .collect();
    let base = if opts.salvage_partial {
        recovered.iter().position(|r| r.is_ok())
    } else {
        recovered.first().and_then(|r| r.as_ref().ok()).map(|_| 0)
    };
    let Some(base) = base else {
        outcome.failed = true;
        for (pass, (r, (_, layer))) in recovered.iter().zip(&marked).enumerate() {
            if let Err(defect) = r {
                outcome.failures.push(FailureRecord {
                    document: doc.id.clone(),
                    pass,
                    failure: FailureKind::Recovery { defect: *defect },
                    entities: layer.len(),
                });
            }
        }
        return Ok(outcome);
    };
    let clean = recovered[base].as_ref().expect("base pass recovered").text.clone();

    let mut kept: Vec<(usize, Span)> = Vec::new();
    for (pass, (r, (_, layer))) in recovered.iter().zip(&marked).enumerate() {
        match r {
            Ok(rec) if rec.text == clean => {
                kept.extend(layer.iter().copied().zip(rec.spans.iter().copied()));
            }
            Ok(_) => outcome.failures.push(FailureRecord {
                document: doc.id.clone(),
                pass,
                failure: FailureKind::TextDivergence,
                entities: layer.len(),
            }),
            Err(defect) => outcome.failures.push(FailureRecord {
                document: doc.id.clone(),
                pass,
                failure: FailureKind::Recovery { defect: *defect },
                entities: layer.len(),
            }),
        }
    }

    let clean_idx = CharIndexed::new(&clean);
    let mut mentions: Vec<Mention> = Vec::new();
    for m in &doc.mentions {
        let Some(i) = contiguous.iter().position(|c| c.id == m.id) else { continue };
        let Some((_, span)) = kept.iter().find(|(k, _)| *k == i) else { continue };
        mentions.push(Mention {
            id: m.id.clone(),
            spans: vec![*span],
            text: clean_idx.slice(span.start, span.end).unwrap_or_default().to_string(),
            entity_type: m.entity_type.clone(),
            gold_concepts: m.gold_concepts.clone(),
            long_form: None,
        });
    }
    outcome.entities_out = mentions.len();
    outcome.document = Some(Document {
        id: doc.id.clone(),
        passages: vec![Passage {
            id: doc.passages.first().map(|p| p.id.clone()).unwrap_or_else(|| format!("{}-p0", doc.id)),
            text: clean,
            char_offset_start: 0,
        }],
        mentions,
    });
    Ok(outcome)
}

fn fail_all(mut outcome: DocOutcome, doc: &Document, message: String) -> DocOutcome {
    outcome.failed = true;
    outcome.failures.push(FailureRecord {
        document: doc.id.clone(),
        pass: 0,
        failure: FailureKind::Translation { message },
        entities: doc.mentions.len(),
    });
    outcome
}

/// Translate every document with markers and rebuild the dataset in the target
/// language. Failed documents are left out of the output and counted as loss.
pub fn project_dataset(
    ds: &Dataset,
    translator: &dyn Translator,
    opts: &ProjectionOptions,
) -> Result<(Dataset, LossReport)> {
    let mut out = Dataset::default();
    let mut report = LossReport::default();
    for (split, docs) in &ds.splits {
        let outcomes = http::bounded_map(docs, opts.max_in_flight, |d| project_document(d, translator, opts));
        let mut projected = Vec::new();
        for (doc, o) in docs.iter().zip(outcomes) {
            let o = o?;
            report.entities_in += o.entities_in;
            report.entities_out += o.entities_out;
            report.discontiguous += o.discontiguous;
            report.escaped_characters += o.escaped;
            report.failures.extend(o.failures);
            if o.failed {
                report.failed_documents.push(doc.id.clone());
            }
            projected.extend(o.document);
        }
        out.splits.insert(split.clone(), projected);
    }
    report.lost = report.entities_in - report.entities_out;
    report.loss_percent = if report.entities_in == 0 {
        0.0
    } else {
        100.0 * report.lost as f64 / report.entities_in as f64
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::from_ner_spans;

    #[test]
    fn marker_insertion() {
        assert_eq!(insert_markers("lupus flare", &[(0, 5, "m")]).unwrap().text, "[lupus] flare");
        let two = insert_markers("lupus and gout", &[(10, 14, "b"), (0, 5, "a")]).unwrap();
        assert_eq!(two.text, "[lupus] and [gout]");
        assert_eq!(two.origin_mention_ids, ["a", "b"]);
        assert_eq!(insert_markers("no mentions", &[]).unwrap().text, "no mentions");
    }

    #[test]
    fn existing_brackets_are_escaped() {
        let m = insert_markers("dose [mg] of x\\y", &[(13, 14, "m")]).unwrap();
        assert_eq!(m.text, "dose \\[mg\\] of [x]\\\\y");
        assert_eq!(m.escaped, 3);
        let r = recover_spans(&m.text, 1).unwrap();
        assert_eq!(r.text, "dose [mg] of x\\y");
        assert_eq!(r.spans, [Span::new(13, 14)]);
    }

    #[test]
    fn recovery_examples() {
        let r = recover_spans("[lupus] aufflammen", 1).unwrap();
        assert_eq!(r.text, "lupus aufflammen");
        assert_eq!(r.spans, [Span::new(0, 5)]);
        assert_eq!(recover_spans("lupus] aufflammen", 1), Err(RecoveryFailure::Unbalanced));
        assert_eq!(recover_spans("[lupus aufflammen", 1), Err(RecoveryFailure::Unbalanced));
        assert_eq!(recover_spans("[a] [b]", 1), Err(RecoveryFailure::CountMismatch));
        assert_eq!(recover_spans("[a [b]]", 2), Err(RecoveryFailure::Nested));
        assert_eq!(recover_spans("[ ] x", 1), Err(RecoveryFailure::EmptyMarker));
        assert_eq!(recover_spans("[ lupus ] x", 1).unwrap().spans, [Span::new(1, 6)]);
    }

    #[test]
    fn overlapping_mentions_go_to_separate_layers() {
        let doc = from_ner_spans("d", "lupus erythematosus", &[(0, 19, "DISO"), (0, 5, "DISO")]).unwrap();
        let ms: Vec<&Mention> = doc.mentions.iter().collect();
        assert_eq!(layers(&ms), [vec![0], vec![1]]);
        let id = FnTranslator(|t: &str| Ok(t.to_string()));
        let (out, report) = project_dataset(&Dataset::single("train", vec![doc.clone()]), &id, &Default::default()).unwrap();
        assert_eq!(report.lost, 0);
        assert_eq!(out.splits["train"][0].mentions, doc.mentions);
    }

    #[test]
    fn translation_error_counts_as_loss() {
        let doc = from_ner_spans("d", "lupus", &[(0, 5, "DISO")]).unwrap();
        let t = FnTranslator(|_: &str| Err(Error::Transport {
            attempts: 1,
            message: "down".into(),
        }));
        let (out, report) = project_dataset(&Dataset::single("train", vec![doc]), &t, &Default::default()).unwrap();
        assert!(out.splits["train"].is_empty());
        assert_eq!((report.entities_in, report.lost), (1, 1));
        assert_eq!(report.failed_documents, ["d"]);
    }

    #[test]
    fn discontiguous_mentions_are_lost() {
        let mut doc = from_ner_spans("d", "left and right arm", &[(0, 4, "ANAT")]).unwrap();
        doc.mentions[0].spans = vec![Span::new(0, 4), Span::new(15, 18)];
        doc.mentions[0].text = "left arm".into();
        let id = FnTranslator(|t: &str| Ok(t.to_string()));
        let (_, report) = project_dataset(&Dataset::single("train", vec![doc]), &id, &Default::default()).unwrap();
        assert_eq!((report.discontiguous, report.lost), (1, 1));
        assert!(report.failed_documents.is_empty());
    }
}
