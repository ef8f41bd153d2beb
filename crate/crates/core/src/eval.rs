//! Strict span-level evaluation.
//!
//! A gold unit is `(document, sorted span set, concept)`; a mention with
//! several gold concepts yields several units. A unit is a true positive at `k`
//! when some predicted mention with the identical span set has that concept
//! among its first `k` entries. A NIL entry occupies a rank but matches
//! nothing. Precision@1 is measured over the set of predicted
//! `(document, span set, top-1 concept)` pairs; abstaining predictions
//! contribute none.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::candidates::{Candidate, CandidateList, Source};
use crate::datamodel::{Dataset, Span};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

/// A ranked prediction for one span set.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub document_id: String,
    pub spans: Vec<Span>,
    pub candidates: Vec<Candidate>,
}

impl Prediction {
    fn top(&self, k: usize) -> impl Iterator<Item = &str> {
        self.candidates
            .iter()
            .take(k)
            .filter(|c| !c.is_nil())
            .map(|c| c.concept_id.as_str())
    }

    fn top1(&self) -> Option<&str> {
        self.candidates.first().filter(|c| !c.is_nil()).map(|c| c.concept_id.as_str())
    }
}

/// Attach spans from `ds` to candidate lists keyed by `(document_id, mention_id)`.
pub fn predictions_from_lists(ds: &Dataset, lists: &[CandidateList]) -> Result<Vec<Prediction>> {
    let mut spans: HashMap<(&str, &str), Vec<Span>> = HashMap::new();
    for doc in ds.documents() {
        for m in &doc.mentions {
            spans.insert((doc.id.as_str(), m.id.as_str()), m.span_key());
        }
    }
    lists
        .iter()
        .map(|l| {
            let s = spans.get(&l.key()).ok_or_else(|| {
                Error::DocumentMismatch(format!(
                    "prediction for mention {}/{} has no counterpart in the dataset",
                    l.document_id, l.mention_id
                ))
            })?;
            Ok(Prediction {
                document_id: l.document_id.clone(),
                spans: s.clone(),
                candidates: l.candidates.clone(),
            })
        })
        .collect()
}

/// Read a dataset's own normalizations as predictions: one single-candidate
/// prediction per normalization, so multi-concept mentions predict every concept.
/// A mention without normalizations becomes an empty (abstaining) prediction.
pub fn predictions_from_dataset(ds: &Dataset) -> Vec<Prediction> {
    let mut out = Vec::new();
    for doc in ds.documents() {
        for m in &doc.mentions {
            let one = |candidates| Prediction {
                document_id: doc.id.clone(),
                spans: m.span_key(),
                candidates,
            };
            if m.gold_concepts.is_empty() {
                out.push(one(Vec::new()));
            }
            for c in &m.gold_concepts {
                out.push(one(vec![Candidate::new(c.db_id.clone(), 1.0, Source::Ensemble)]));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold_units: usize,
    pub predicted_pairs: usize,
    pub true_positives: usize,
    pub abstentions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub gold_units: usize,
    pub true_positives_at_1: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdowns {
    /// Keyed by mention length in whitespace tokens.
    pub by_token_length: BTreeMap<usize, Bucket>,
    /// Keyed by the largest number of aliases any candidate shares with the gold
    /// concept (the gold concept itself included); 0 means it was not retrieved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub by_shared_aliases: Option<BTreeMap<usize, Bucket>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision_at_1: f64,
    pub recall_at_1: f64,
    pub f1_at_1: f64,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub counts: Counts,
    pub breakdowns: Breakdowns,
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

type UnitKey<'a> = (&'a str, Vec<Span>);

fn lower_aliases(kb: &KnowledgeBase, id: &str) -> BTreeSet<String> {
    kb.get(id)
        .map(|c| c.aliases.iter().map(|a| a.value.to_lowercase()).collect())
        .unwrap_or_default()
}

pub fn evaluate(gold: &Dataset, preds: &[Prediction], ks: &[usize], kb: Option<&KnowledgeBase>) -> Result<EvalReport> {
    if let Some(&k) = ks.iter().find(|k| **k == 0) {
        return Err(Error::InvalidK { k, min: 1 });
    }
    let doc_ids: BTreeSet<&str> = gold.documents().map(|d| d.id.as_str()).collect();
    if let Some(p) = preds.iter().find(|p| !doc_ids.contains(p.document_id.as_str())) {
        return Err(Error::DocumentMismatch(format!(
            "predicted document {} is not in the gold dataset",
            p.document_id
        )));
    }

    // Gold units, with the token length of the first mention carrying each span set.
    let mut units: BTreeSet<(UnitKey, &str)> = BTreeSet::new();
    let mut unit_len: HashMap<UnitKey, usize> = HashMap::new();
    for doc in gold.documents() {
        for m in &doc.mentions {
            let key = (doc.id.as_str(), m.span_key());
            unit_len.entry(key.clone()).or_insert_with(|| m.token_len());
            for c in &m.gold_concepts {
                units.insert((key.clone(), c.db_id.as_str()));
            }
        }
    }

    let mut by_span: HashMap<UnitKey, Vec<&Prediction>> = HashMap::new();
    for p in preds {
        let mut spans = p.spans.clone();
        spans.sort();
        by_span.entry((p.document_id.as_str(), spans)).or_default().push(p);
    }

    let rank_of = |key: &UnitKey, concept: &str| -> Option<usize> {
        by_span.get(key)?.iter().filter_map(|p| {
            p.candidates
                .iter()
                .position(|c| !c.is_nil() && c.concept_id == concept)
        }).min()
    };

    let mut pairs: BTreeSet<(UnitKey, &str)> = BTreeSet::new();
    let mut abstentions = 0;
    for p in preds {
        let mut spans = p.spans.clone();
        spans.sort();
        match p.top1() {
            Some(c) => {
                pairs.insert(((p.document_id.as_str(), spans), c));
            }
            None => abstentions += 1,
        }
    }
    let tp_pairs = pairs.iter().filter(|u| units.contains(*u)).count();

    let ranks: Vec<Option<usize>> = units.iter().map(|(key, c)| rank_of(key, c)).collect();
    let hits_at = |k: usize| ranks.iter().filter(|r| r.is_some_and(|r| r < k)).count();
    let tp1 = hits_at(1);

    let mut recall_at_k = BTreeMap::new();
    for &k in ks {
        recall_at_k.insert(k, ratio(hits_at(k), units.len()));
    }

    let mut breakdowns = Breakdowns::default();
    for ((key, concept), rank) in units.iter().zip(&ranks) {
        let hit = usize::from(*rank == Some(0));
        let b = breakdowns.by_token_length.entry(unit_len[key]).or_default();
        b.gold_units += 1;
        b.true_positives_at_1 += hit;
        if let Some(kb) = kb {
            let shared = if rank.is_none() {
                0
            } else {
                let gold_aliases = lower_aliases(kb, concept);
                let candidates: BTreeSet<&str> = by_span[key].iter().flat_map(|p| p.top(usize::MAX)).collect();
                candidates
                    .iter()
                    .map(|c| lower_aliases(kb, c).intersection(&gold_aliases).count())
                    .max()
                    .unwrap_or(0)
            };
            let b = breakdowns.by_shared_aliases.get_or_insert_with(BTreeMap::new).entry(shared).or_default();
            b.gold_units += 1;
            b.true_positives_at_1 += hit;
        }
    }

    let precision_at_1 = ratio(tp_pairs, pairs.len());
    let recall_at_1 = ratio(tp1, units.len());
    Ok(EvalReport {
        precision_at_1,
        recall_at_1,
        f1_at_1: f1(precision_at_1, recall_at_1),
        recall_at_k,
        counts: Counts {
            gold_units: units.len(),
            predicted_pairs: pairs.len(),
            true_positives: tp1,
            abstentions,
        },
        breakdowns,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("precision@1".into(), format!("{:.4}", self.precision_at_1)),
            ("recall@1".into(), format!("{:.4}", self.recall_at_1)),
            ("f1@1".into(), format!("{:.4}", self.f1_at_1)),
        ];
        for (k, r) in self.recall_at_k.iter().filter(|(k, _)| **k != 1) {
            rows.push((format!("recall@{k}"), format!("{r:.4}")));
        }
        rows.push(("gold units".into(), self.counts.gold_units.to_string()));
        rows.push(("predicted pairs".into(), self.counts.predicted_pairs.to_string()));
        rows.push(("true positives@1".into(), self.counts.true_positives.to_string()));
        rows.push(("abstentions".into(), self.counts.abstentions.to_string()));
        let w = rows.iter().map(|(a, _)| a.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (a, b) in &rows {
            let _ = writeln!(out, "{a:<w$}  {b:>10}");
        }
        let mut table = |title: &str, m: &BTreeMap<usize, Bucket>| {
            let _ = writeln!(out, "\n{title:<16}  {:>10}  {:>10}", "gold", "tp@1");
            for (k, b) in m {
                let _ = writeln!(out, "{k:<16}  {:>10}  {:>10}", b.gold_units, b.true_positives_at_1);
            }
        };
        table("tokens", &self.breakdowns.by_token_length);
        if let Some(m) = &self.breakdowns.by_shared_aliases {
            table("shared aliases", m);
        }
        out
    }
}
