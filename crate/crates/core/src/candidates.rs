//! Ranked candidate lists exchanged between generators, filters and the re-ranker.
//!
//! Dump format, one line per mention:
//! `{"document_id":"d1","mention_id":"e1","candidates":[{"concept_id":"C1","score":0.93,"source":"sparse"}]}`

use std::cmp::Ordering;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concept id of the synthetic not-in-list candidate.
pub const NIL_CONCEPT_ID: &str = "NIL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sparse,
    Dense,
    Ensemble,
    Nil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub concept_id: String,
    pub score: f64,
    pub source: Source,
}

impl Candidate {
    pub fn new(concept_id: impl Into<String>, score: f64, source: Source) -> Self {
        Self {
            concept_id: concept_id.into(),
            score,
            source,
        }
    }

    pub fn is_nil(&self) -> bool {
        self.source == Source::Nil
    }
}

/// Score descending, then concept id ascending.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.concept_id.cmp(&b.concept_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    #[serde(default)]
    pub document_id: String,
    pub mention_id: String,
    pub candidates: Vec<Candidate>,
    /// Set by the re-ranker when the NIL candidate ranks first.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub abstain: bool,
}

impl CandidateList {
    pub fn new(document_id: impl Into<String>, mention_id: impl Into<String>, mut candidates: Vec<Candidate>) -> Self {
        candidates.sort_by(rank_order);
        Self {
            document_id: document_id.into(),
            mention_id: mention_id.into(),
            candidates,
            abstain: false,
        }
    }

    pub fn empty(document_id: impl Into<String>, mention_id: impl Into<String>) -> Self {
        Self::new(document_id, mention_id, Vec::new())
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.document_id, &self.mention_id)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.candidates.truncate(k);
    }

    pub fn concept_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.concept_id.as_str())
    }

    /// Top candidate, unless the list abstains or is empty.
    pub fn top1(&self) -> Option<&Candidate> {
        self.candidates.first().filter(|c| !c.is_nil())
    }
}

pub fn write_candidates(path: impl AsRef<Path>, lists: &[CandidateList]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for l in lists {
        serde_json::to_writer(&mut w, l).expect("candidate list serializes");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<CandidateList>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: CandidateList = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("{} line {}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        out.push(l);
    }
    Ok(out)
}
