//! Document and annotation model for span-offset corpora.
//!
//! The JSON layout mirrors the BigBIO knowledge-base schema, reduced to what
//! normalization needs:
//!
//! ```json
//! {"documents": [{"id": "d1",
//!                 "passages": [{"id": "p1", "text": "lupus flare", "offset": 0}],
//!                 "entities": [{"id": "e1", "offsets": [[0, 5]], "text": "lupus",
//!                               "type": "DISO",
//!                               "normalized": [{"db_name": "UMLS", "db_id": "C0024141"}]}]}]}
//! ```
//!
//! A file holds either one split (`documents`, optionally named via a top-level
//! `split` key, default `test`) or several under `{"splits": {"train": [...], ...}}`.
//! Offsets are Unicode scalar-value indices into the document text, which is
//! the passages laid out at their offsets with gaps filled by spaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::{char_len, CharIndexed};

pub const DEFAULT_SPLIT: &str = "test";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptRef {
    pub db_name: String,
    pub db_id: String,
}

impl ConceptRef {
    pub fn new(db_name: impl Into<String>, db_id: impl Into<String>) -> Self {
        Self {
            db_name: db_name.into(),
            db_id: db_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    #[serde(rename = "offset")]
    pub char_offset_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    #[serde(rename = "offsets")]
    pub spans: Vec<Span>,
    pub text: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
    #[serde(rename = "normalized", default)]
    pub gold_concepts: Vec<ConceptRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_form: Option<String>,
}

impl Mention {
    /// Spans sorted ascending; the identity of a mention for strict matching.
    pub fn span_key(&self) -> Vec<Span> {
        let mut spans = self.spans.clone();
        spans.sort();
        spans
    }

    pub fn token_len(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub passages: Vec<Passage>,
    #[serde(rename = "entities")]
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Full document text: passages placed at their offsets, gaps space-filled.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let mut len = 0usize;
        for p in &self.passages {
            while len < p.char_offset_start {
                out.push(' ');
                len += 1;
            }
            out.push_str(&p.text);
            len += char_len(&p.text);
        }
        out
    }

    /// Mention text as derived from the document: span slices joined by one space.
    pub fn slice_mention(&self, spans: &[Span]) -> Option<String> {
        let text = self.text();
        let idx = CharIndexed::new(&text);
        let parts: Option<Vec<&str>> = spans.iter().map(|s| idx.slice(s.start, s.end)).collect();
        parts.map(|p| p.join(" "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub splits: BTreeMap<String, Vec<Document>>,
}

impl Dataset {
    pub fn single(split: impl Into<String>, documents: Vec<Document>) -> Self {
        let mut splits = BTreeMap::new();
        splits.insert(split.into(), documents);
        Self { splits }
    }

    pub fn split(&self, name: &str) -> Option<&[Document]> {
        self.splits.get(name).map(Vec::as_slice)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.splits.values().flatten()
    }

    pub fn mention_count(&self) -> usize {
        self.documents().map(|d| d.mentions.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    BigbioJson,
}

/// One invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub split: String,
    pub document: String,
    pub mention: Option<String>,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] document {}", self.split, self.document)?;
        if let Some(m) = &self.mention {
            write!(f, ", mention {m}")?;
        }
        write!(f, ": {} ({})", self.rule, self.detail)
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        DatasetFormat::BigbioJson => parse_dataset(&raw, &path.display().to_string()),
    }
}

pub fn parse_dataset(raw: &str, context: &str) -> Result<Dataset> {
    let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Schema {
        context: context.to_string(),
        message: "top level must be an object".into(),
    })?;

    let mut splits = BTreeMap::new();
    if let Some(s) = obj.get("splits") {
        let s = s.as_object().ok_or_else(|| Error::Schema {
            context: context.to_string(),
            message: "`splits` must be an object".into(),
        })?;
        for (name, docs) in s {
            splits.insert(name.clone(), parse_documents(docs, &format!("{context}: splits.{name}"))?);
        }
    } else if let Some(docs) = obj.get("documents") {
        let name = match obj.get("split") {
            None => DEFAULT_SPLIT.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(Error::Schema {
                    context: context.to_string(),
                    message: "`split` must be a string".into(),
                })
            }
        };
        splits.insert(name, parse_documents(docs, &format!("{context}: documents"))?);
    } else {
        return Err(Error::Schema {
            context: context.to_string(),
            message: "missing field `documents`".into(),
        });
    }
    let ds = Dataset { splits };
    check_spans(&ds)?;
    let violations = validate_dataset(&ds);
    if !violations.is_empty() {
        return Err(Error::InvalidDataset(
            violations.iter().map(ToString::to_string).collect(),
        ));
    }
    Ok(ds)
}

fn parse_documents(value: &Value, context: &str) -> Result<Vec<Document>> {
    let arr = value.as_array().ok_or_else(|| Error::Schema {
        context: context.to_string(),
        message: "expected an array of documents".into(),
    })?;
    arr.iter()
        .enumerate()
        .map(|(i, d)| {
            Document::deserialize(d).map_err(|e| Error::Schema {
                context: format!("{context}[{i}]"),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Span errors are fatal at load time rather than reported as violations.
fn check_spans(ds: &Dataset) -> Result<()> {
    for doc in ds.documents() {
        let len = char_len(&doc.text());
        for m in &doc.mentions {
            for s in &m.spans {
                if s.end <= s.start {
                    return Err(Error::Span {
                        document: doc.id.clone(),
                        mention: m.id.clone(),
                        message: format!("end {} <= start {}", s.end, s.start),
                    });
                }
                if s.end > len {
                    return Err(Error::Span {
                        document: doc.id.clone(),
                        mention: m.id.clone(),
                        message: format!("span ({}, {}) outside text of length {len}", s.start, s.end),
                    });
                }
            }
        }
    }
    Ok(())
}

pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    for (split, docs) in &ds.splits {
        let mut seen = BTreeSet::new();
        for doc in docs {
            let mut v = |mention: Option<&str>, rule: &'static str, detail: String| {
                out.push(Violation {
                    split: split.clone(),
                    document: doc.id.clone(),
                    mention: mention.map(str::to_string),
                    rule,
                    detail,
                })
            };
            if !seen.insert(doc.id.as_str()) {
                v(None, "duplicate_document_id", "document id repeated in split".into());
            }
            let mut prev_end = 0usize;
            for (i, p) in doc.passages.iter().enumerate() {
                if i > 0 && p.char_offset_start < prev_end {
                    v(
                        None,
                        "passage_order",
                        format!("passage {} starts at {} before previous end {prev_end}", p.id, p.char_offset_start),
                    );
                }
                prev_end = p.char_offset_start + char_len(&p.text);
            }
            let text = doc.text();
            let idx = CharIndexed::new(&text);
            let mut mention_ids = BTreeSet::new();
            for m in &doc.mentions {
                if !mention_ids.insert(m.id.as_str()) {
                    v(Some(&m.id), "duplicate_mention_id", "mention id repeated in document".into());
                }
                if m.spans.is_empty() {
                    v(Some(&m.id), "empty_spans", "mention has no spans".into());
                }
                let mut in_bounds = true;
                for s in &m.spans {
                    if s.end <= s.start {
                        in_bounds = false;
                        v(Some(&m.id), "span_order", format!("end {} <= start {}", s.end, s.start));
                    } else if s.end > idx.len() {
                        in_bounds = false;
                        v(Some(&m.id), "span_bounds", format!("end {} beyond text length {}", s.end, idx.len()));
                    }
                }
                if in_bounds && !m.spans.is_empty() {
                    let derived = m
                        .spans
                        .iter()
                        .map(|s| idx.slice(s.start, s.end).unwrap_or_default())
                        .collect::<Vec<_>>()
                        .join(" ");
                    if derived != m.text {
                        v(
                            Some(&m.id),
                            "text_mismatch",
                            format!("text {:?} but spans cover {:?}", m.text, derived),
                        );
                    }
                }
                for c in &m.gold_concepts {
                    if c.db_id.is_empty() {
                        v(Some(&m.id), "empty_db_id", "gold concept with empty db_id".into());
                    }
                }
            }
        }
    }
    out
}

/// Builds a single-passage document from NER output. Mentions get empty gold
/// concepts and ids `{doc_id}-{i}`; nested and overlapping spans are kept.
pub fn from_ner_spans(doc_id: &str, text: &str, spans: &[(usize, usize, &str)]) -> Result<Document> {
    let idx = CharIndexed::new(text);
    let mut mentions = Vec::with_capacity(spans.len());
    for (i, &(start, end, ty)) in spans.iter().enumerate() {
        let id = format!("{doc_id}-{i}");
        let slice = (start < end).then(|| idx.slice(start, end)).flatten();
        let Some(slice) = slice else {
            return Err(Error::Span {
                document: doc_id.to_string(),
                mention: id,
                message: format!("span ({start}, {end}) invalid for text of length {}", idx.len()),
            });
        };
        mentions.push(Mention {
            id,
            spans: vec![Span::new(start, end)],
            text: slice.to_string(),
            entity_type: (!ty.is_empty()).then(|| ty.to_string()),
            gold_concepts: Vec::new(),
            long_form: None,
        });
    }
    Ok(Document {
        id: doc_id.to_string(),
        passages: vec![Passage {
            id: format!("{doc_id}-p0"),
            text: text.to_string(),
            char_offset_start: 0,
        }],
        mentions,
    })
}
