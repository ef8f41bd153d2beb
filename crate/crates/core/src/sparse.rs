//! TF-IDF index over character trigrams of every KB alias.
//!
//! Each alias is lowercased and padded with one space on both sides before
//! trigram extraction, so n-grams are sensitive to word boundaries. Weights
//! are raw trigram counts times `idf = ln((1 + N) / (1 + df)) + 1`, with `N`
//! the number of alias rows; rows are L2-normalized. Retrieval is an exact
//! scan over the inverted (column-sparse) layout.
//!
//! On-disk layout of an index directory:
//!
//! | file          | content                                              |
//! |---------------|------------------------------------------------------|
//! | manifest.json | format version, kind `tfidf_ngram`, params, kb_hash   |
//! | vocab.json    | n-gram strings, position = column id                 |
//! | rows.json     | `[concept_id, alias]` per row                        |
//! | idf.f64       | `f64` LE, one per column                             |
//! | col_ptr.u64   | `u64` LE, `n_terms + 1` offsets into the next two    |
//! | col_rows.u32  | `u32` LE row ids, ascending within each column       |
//! | col_vals.f64  | `f64` LE normalized weights                          |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde_json::json;

use crate::candidates::{Candidate, CandidateList, Source};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::manifest::{binio, read_json, write_json, IndexManifest, RunManifest};
use crate::text::padded_char_ngrams;

pub const FORMAT_VERSION: u32 = 1;
pub const KIND: &str = "tfidf_ngram";
pub const NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RowLabel {
    pub concept_id: String,
    pub alias: String,
}

#[derive(Debug, Clone)]
pub struct SparseIndex {
    terms: Vec<String>,
    vocabulary: HashMap<String, u32>,
    idf: Vec<f64>,
    rows: Vec<RowLabel>,
    col_ptr: Vec<u64>,
    col_rows: Vec<u32>,
    col_vals: Vec<f64>,
    kb_hash: String,
}

fn term_counts(text: &str) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for g in padded_char_ngrams(text, NGRAM) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

fn l2_normalize(v: &mut [(u32, f64)]) {
    let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, x) in v.iter_mut() {
            *x /= norm;
        }
    }
}

pub fn build_sparse_index(kb: &KnowledgeBase) -> Result<SparseIndex> {
    if kb.is_empty() {
        return Err(Error::EmptyKb("cannot index an empty knowledge base".into()));
    }
    let rows: Vec<RowLabel> = kb
        .alias_rows()
        .map(|(c, a)| RowLabel {
            concept_id: c.to_string(),
            alias: a.to_string(),
        })
        .collect();
    let counts: Vec<BTreeMap<String, u32>> = rows.iter().map(|r| term_counts(&r.alias)).collect();

    let terms: Vec<String> = counts
        .iter()
        .flat_map(|c| c.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vocabulary: HashMap<String, u32> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();

    let mut df = vec![0u64; terms.len()];
    for c in &counts {
        for t in c.keys() {
            df[vocabulary[t] as usize] += 1;
        }
    }
    let n = rows.len() as f64;
    let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();

    let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); terms.len()];
    for (r, c) in counts.iter().enumerate() {
        // BTreeMap order of terms equals ascending column order.
        let mut v: Vec<(u32, f64)> = c
            .iter()
            .map(|(t, &tf)| {
                let col = vocabulary[t];
                (col, tf as f64 * idf[col as usize])
            })
            .collect();
        l2_normalize(&mut v);
        for (col, x) in v {
            columns[col as usize].push((r as u32, x));
        }
    }

    let mut col_ptr = Vec::with_capacity(terms.len() + 1);
    let mut col_rows = Vec::new();
    let mut col_vals = Vec::new();
    col_ptr.push(0u64);
    for col in columns {
        for (r, x) in col {
            col_rows.push(r);
            col_vals.push(x);
        }
        col_ptr.push(col_rows.len() as u64);
    }

    Ok(SparseIndex {
        terms,
        vocabulary,
        idf,
        rows,
        col_ptr,
        col_rows,
        col_vals,
        kb_hash: kb.kb_hash(),
    })
}

impl SparseIndex {
    pub fn kb_hash(&self) -> &str {
        &self.kb_hash
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn rows(&self) -> &[RowLabel] {
        &self.rows
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn column_of(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    fn column(&self, col: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (a, b) = (self.col_ptr[col] as usize, self.col_ptr[col + 1] as usize);
        self.col_rows[a..b].iter().copied().zip(self.col_vals[a..b].iter().copied())
    }

    /// The stored weight vector of a row, ascending by column.
    pub fn row_vector(&self, row: usize) -> Vec<(u32, f64)> {
        (0..self.terms.len())
            .filter_map(|col| self.column(col).find(|(r, _)| *r as usize == row).map(|(_, x)| (col as u32, x)))
            .collect()
    }

    /// Normalized query vector over known terms, ascending by column.
    pub fn vectorize(&self, text: &str) -> Vec<(u32, f64)> {
        let mut v: Vec<(u32, f64)> = term_counts(text)
            .into_iter()
            .filter_map(|(t, tf)| {
                let col = *self.vocabulary.get(&t)?;
                Some((col, tf as f64 * self.idf[col as usize]))
            })
            .collect();
        v.sort_by_key(|(c, _)| *c);
        l2_normalize(&mut v);
        v
    }

    /// Cosine of the query with every row sharing at least one n-gram.
    pub fn row_scores(&self, text: &str) -> Vec<(usize, f64)> {
        let q = self.vectorize(text);
        let mut acc = vec![0.0f64; self.rows.len()];
        let mut touched = vec![false; self.rows.len()];
        for (col, qv) in q {
            for (r, rv) in self.column(col as usize) {
                acc[r as usize] += qv * rv;
                touched[r as usize] = true;
            }
        }
        touched
            .iter()
            .enumerate()
            .filter(|(_, t)| **t)
            .map(|(r, _)| (r, acc[r].clamp(0.0, 1.0)))
            .collect()
    }

    pub fn query_one(&self, text: &str, k: usize) -> Vec<Candidate> {
        let mut best: HashMap<&str, f64> = HashMap::new();
        for (r, s) in self.row_scores(text) {
            let e = best.entry(self.rows[r].concept_id.as_str()).or_insert(s);
            if s > *e {
                *e = s;
            }
        }
        let mut l = CandidateList::new(
            "",
            "",
            best.into_iter().map(|(c, s)| Candidate::new(c, s, Source::Sparse)).collect(),
        );
        l.truncate(k);
        l.candidates
    }

    pub fn save(&self, dir: impl AsRef<Path>, run: Option<RunManifest>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = IndexManifest {
            format_version: FORMAT_VERSION,
            kind: KIND.into(),
            kb_hash: self.kb_hash.clone(),
            n_rows: self.rows.len(),
            params: json!({
                "n": NGRAM,
                "lowercase": true,
                "padding": " ",
                "tf": "raw_count",
                "idf": "ln((1+N)/(1+df))+1",
                "normalization": "l2",
                "n_terms": self.terms.len(),
                "nnz": self.col_rows.len(),
            }),
            run,
        };
        manifest.write(dir)?;
        write_json(&dir.join("vocab.json"), &self.terms)?;
        let rows: Vec<[&str; 2]> = self.rows.iter().map(|r| [r.concept_id.as_str(), r.alias.as_str()]).collect();
        write_json(&dir.join("rows.json"), &rows)?;
        binio::write_f64(&dir.join("idf.f64"), &self.idf)?;
        binio::write_u64(&dir.join("col_ptr.u64"), &self.col_ptr)?;
        binio::write_u32(&dir.join("col_rows.u32"), &self.col_rows)?;
        binio::write_f64(&dir.join("col_vals.f64"), &self.col_vals)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = IndexManifest::read(dir)?;
        if manifest.kind != KIND {
            return Err(Error::IndexFormat(format!("expected kind {KIND}, found {}", manifest.kind)));
        }
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::IndexFormat(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let terms: Vec<String> = read_json(&dir.join("vocab.json"))?;
        let rows: Vec<[String; 2]> = read_json(&dir.join("rows.json"))?;
        let idf = binio::read_f64(&dir.join("idf.f64"))?;
        let col_ptr = binio::read_u64(&dir.join("col_ptr.u64"))?;
        let col_rows = binio::read_u32(&dir.join("col_rows.u32"))?;
        let col_vals = binio::read_f64(&dir.join("col_vals.f64"))?;
        let consistent = idf.len() == terms.len()
            && col_ptr.len() == terms.len() + 1
            && col_rows.len() == col_vals.len()
            && col_ptr.last().copied() == Some(col_rows.len() as u64)
            && rows.len() == manifest.n_rows
            && col_rows.iter().all(|&r| (r as usize) < rows.len());
        if !consistent {
            return Err(Error::IndexFormat(format!("{}: inconsistent array lengths", dir.display())));
        }
        let vocabulary = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Self {
            terms,
            vocabulary,
            idf,
            rows: rows
                .into_iter()
                .map(|[concept_id, alias]| RowLabel { concept_id, alias })
                .collect(),
            col_ptr,
            col_rows,
            col_vals,
            kb_hash: manifest.kb_hash,
        })
    }
}

/// Top-k concepts per mention by maximum alias cosine; ties by concept id.
pub fn query_sparse(index: &SparseIndex, mentions: &[&str], k: usize) -> Result<Vec<Vec<Candidate>>> {
    if k < 1 {
        return Err(Error::InvalidK { k, min: 1 });
    }
    Ok(mentions.iter().map(|m| index.query_one(m, k)).collect())
}
