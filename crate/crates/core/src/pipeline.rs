//! Candidate generation over datasets: run generators, merge, filter by semantic group.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::candidates::{Candidate, CandidateList, Source};
use crate::datamodel::Dataset;
use crate::dense::{query_dense, DenseIndex, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::sparse::{query_sparse, SparseIndex};

pub const DEFAULT_K: usize = 64;

/// `(document_id, mention_id)`.
pub type MentionKey = (String, String);

pub trait CandidateGenerator: Sync {
    fn name(&self) -> &str;
    fn kb_hash(&self) -> &str;
    fn generate(&self, mentions: &[&str], k: usize) -> Result<Vec<Vec<Candidate>>>;
}

impl CandidateGenerator for SparseIndex {
    fn name(&self) -> &str {
        "sparse"
    }

    fn kb_hash(&self) -> &str {
        SparseIndex::kb_hash(self)
    }

    fn generate(&self, mentions: &[&str], k: usize) -> Result<Vec<Vec<Candidate>>> {
        query_sparse(self, mentions, k)
    }
}

pub struct DenseGenerator<'a> {
    pub index: &'a DenseIndex,
    pub provider: &'a dyn EmbeddingProvider,
}

impl CandidateGenerator for DenseGenerator<'_> {
    fn name(&self) -> &str {
        "dense"
    }

    fn kb_hash(&self) -> &str {
        self.index.kb_hash()
    }

    fn generate(&self, mentions: &[&str], k: usize) -> Result<Vec<Vec<Candidate>>> {
        query_dense(self.index, self.provider, mentions, k)
    }
}

fn check_kb_hashes(generators: &[&dyn CandidateGenerator], expected: Option<&str>) -> Result<()> {
    let mut reference = expected.map(str::to_string);
    for g in generators {
        match &reference {
            Some(h) if h != g.kb_hash() => {
                return Err(Error::KbHashMismatch {
                    expected: h.clone(),
                    found: g.kb_hash().to_string(),
                })
            }
            Some(_) => {}
            None => reference = Some(g.kb_hash().to_string()),
        }
    }
    Ok(())
}

/// Every mention in dataset order with its key and raw text.
fn mentions_in_order(ds: &Dataset) -> Result<Vec<(MentionKey, &str)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for doc in ds.documents() {
        for m in &doc.mentions {
            let key = (doc.id.clone(), m.id.clone());
            if !seen.insert(key.clone()) {
                return Err(Error::Schema {
                    context: "dataset".into(),
                    message: format!("mention {}/{} occurs more than once across splits", key.0, key.1),
                });
            }
            out.push((key, m.text.as_str()));
        }
    }
    Ok(out)
}

/// One candidate list per generator for every mention of every split.
pub fn generate_candidates(
    ds: &Dataset,
    generators: &[&dyn CandidateGenerator],
    k: usize,
    expected_kb_hash: Option<&str>,
) -> Result<BTreeMap<MentionKey, Vec<CandidateList>>> {
    if k < 1 {
        return Err(Error::InvalidK { k, min: 1 });
    }
    check_kb_hashes(generators, expected_kb_hash)?;
    let mentions = mentions_in_order(ds)?;
    let texts: Vec<&str> = mentions.iter().map(|(_, t)| *t).collect();
    let mut out: BTreeMap<MentionKey, Vec<CandidateList>> = mentions
        .iter()
        .map(|(key, _)| (key.clone(), Vec::with_capacity(generators.len())))
        .collect();
    if texts.is_empty() {
        return Ok(out);
    }
    for g in generators {
        for ((key, _), cands) in mentions.iter().zip(g.generate(&texts, k)?) {
            let mut l = CandidateList::new(key.0.clone(), key.1.clone(), cands);
            l.truncate(k);
            out.get_mut(key).expect("key inserted above").push(l);
        }
    }
    Ok(out)
}

/// Union of concepts with each concept's maximum score; raw scores are not re-weighted.
pub fn ensemble_merge(lists: &[CandidateList]) -> Result<CandidateList> {
    let first = lists
        .first()
        .ok_or_else(|| Error::Config("ensemble_merge needs at least one list".into()))?;
    let mut best: HashMap<&str, f64> = HashMap::new();
    for l in lists {
        if l.key() != first.key() {
            return Err(Error::MentionMismatch(
                format!("{}/{}", first.document_id, first.mention_id),
                format!("{}/{}", l.document_id, l.mention_id),
            ));
        }
        for c in &l.candidates {
            let e = best.entry(c.concept_id.as_str()).or_insert(c.score);
            if c.score > *e {
                *e = c.score;
            }
        }
    }
    Ok(CandidateList::new(
        first.document_id.clone(),
        first.mention_id.clone(),
        best.into_iter().map(|(c, s)| Candidate::new(c, s, Source::Ensemble)).collect(),
    ))
}

/// Mention entity type → allowed semantic groups.
pub type TypeGroupMap = BTreeMap<String, BTreeSet<String>>;

/// Maps every group code known to the KB onto itself, so datasets whose entity
/// types are group codes (`DISO`, `CHEM`, ...) need no extra configuration.
pub fn identity_type_map(kb: &KnowledgeBase) -> TypeGroupMap {
    kb.group_map
        .values()
        .map(|g| (g.clone(), BTreeSet::from([g.clone()])))
        .collect()
}

/// Parse `type<TAB>group[,group...]` lines; `#` starts a comment.
pub fn parse_type_map(raw: &str) -> Result<TypeGroupMap> {
    let mut out = TypeGroupMap::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (ty, groups) = line.split_once('\t').ok_or_else(|| Error::MalformedRow {
            file: "type map".into(),
            row: i + 1,
            message: "expected type<TAB>groups".into(),
        })?;
        out.entry(ty.trim().to_string())
            .or_default()
            .extend(groups.split(',').map(|g| g.trim().to_string()).filter(|g| !g.is_empty()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct FilterStats {
    pub lists: usize,
    pub removed: usize,
    pub missing_concepts: usize,
    /// Lists left unchanged because the mention type has no group mapping.
    pub unknown_type: usize,
}

/// Drop candidates none of whose semantic groups is allowed for the mention type.
/// Survivors keep their order. Concepts absent from the KB are dropped.
pub fn filter_by_semantic_group(
    cl: &CandidateList,
    mention_type: Option<&str>,
    kb: &KnowledgeBase,
    type_to_group: &TypeGroupMap,
    stats: &mut FilterStats,
) -> CandidateList {
    stats.lists += 1;
    let Some(allowed) = mention_type.and_then(|t| type_to_group.get(t)) else {
        stats.unknown_type += 1;
        return cl.clone();
    };
    let mut out = cl.clone();
    out.candidates.retain(|c| match kb.get(&c.concept_id) {
        None => {
            stats.missing_concepts += 1;
            stats.removed += 1;
            false
        }
        Some(concept) => {
            let keep = kb.groups_of(concept).iter().any(|g| allowed.contains(*g));
            if !keep {
                stats.removed += 1;
            }
            keep
        }
    });
    out
}

pub struct LinkOptions<'a> {
    pub k: usize,
    /// Semantic-group filter applied after merging and before truncation.
    pub filter: Option<(&'a KnowledgeBase, &'a TypeGroupMap)>,
}

/// Generate, merge (when more than one generator), filter and truncate;
/// lists come back in dataset order.
pub fn link_dataset(
    ds: &Dataset,
    generators: &[&dyn CandidateGenerator],
    opts: &LinkOptions,
    expected_kb_hash: Option<&str>,
) -> Result<(Vec<CandidateList>, FilterStats)> {
    let generated = generate_candidates(ds, generators, opts.k, expected_kb_hash)?;
    let mut stats = FilterStats::default();
    let mut out = Vec::new();
    for doc in ds.documents() {
        for m in &doc.mentions {
            let lists = &generated[&(doc.id.clone(), m.id.clone())];
            let mut l = if lists.len() == 1 {
                lists[0].clone()
            } else {
                ensemble_merge(lists)?
            };
            if let Some((kb, map)) = opts.filter {
                l = filter_by_semantic_group(&l, m.entity_type.as_deref(), kb, map, &mut stats);
            }
            l.truncate(opts.k);
            out.push(l);
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::from_ner_spans;
    use crate::kb::{default_group_map, Alias, Concept};
    use crate::sparse::build_sparse_index;

    fn list(m: &str, c: &[(&str, f64)]) -> CandidateList {
        CandidateList::new("d", m, c.iter().map(|(id, s)| Candidate::new(*id, *s, Source::Sparse)).collect())
    }

    fn ids(l: &CandidateList) -> Vec<(&str, f64)> {
        l.candidates.iter().map(|c| (c.concept_id.as_str(), c.score)).collect()
    }

    #[test]
    fn merge_takes_max() {
        let m = ensemble_merge(&[list("m", &[("A", 0.9), ("B", 0.5)]), list("m", &[("B", 0.8), ("C", 0.7)])]).unwrap();
        assert_eq!(ids(&m), [("A", 0.9), ("B", 0.8), ("C", 0.7)]);
        assert!(m.candidates.iter().all(|c| c.source == Source::Ensemble));
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let l = list("m", &[("A", 0.9), ("B", 0.5)]);
        assert_eq!(ids(&ensemble_merge(&[l.clone(), list("m", &[])]).unwrap()), ids(&l));
    }

    #[test]
    fn merge_rejects_different_mentions() {
        assert!(matches!(
            ensemble_merge(&[list("m1", &[]), list("m2", &[])]),
            Err(Error::MentionMismatch(..))
        ));
    }

    fn typed_kb() -> KnowledgeBase {
        let c = |id: &str, name: &str, types: &[&str]| Concept {
            concept_id: id.into(),
            canonical_name: name.into(),
            semantic_types: types.iter().map(|t| t.to_string()).collect(),
            aliases: vec![Alias::new(name, "en")],
        };
        KnowledgeBase::new(
            "t",
            vec![
                c("D1", "lupus", &["T047"]),
                c("C1", "lupulin", &["T109"]),
                c("M1", "lupus drug", &["T109", "T047"]),
            ],
            default_group_map(),
        )
        .unwrap()
    }

    #[test]
    fn filter_any_match_and_order() {
        let kb = typed_kb();
        let map = identity_type_map(&kb);
        let mut stats = FilterStats::default();
        let l = list("m", &[("C1", 0.9), ("M1", 0.8), ("D1", 0.7), ("X9", 0.6)]);
        let f = filter_by_semantic_group(&l, Some("DISO"), &kb, &map, &mut stats);
        assert_eq!(ids(&f), [("M1", 0.8), ("D1", 0.7)]);
        assert_eq!(stats.removed, 2);
        assert_eq!(stats.missing_concepts, 1);
    }

    #[test]
    fn filter_unknown_type_is_noop() {
        let kb = typed_kb();
        let mut stats = FilterStats::default();
        let l = list("m", &[("C1", 0.9)]);
        assert_eq!(filter_by_semantic_group(&l, Some("Weird"), &kb, &identity_type_map(&kb), &mut stats), l);
        assert_eq!(filter_by_semantic_group(&l, None, &kb, &identity_type_map(&kb), &mut stats), l);
        assert_eq!(stats.unknown_type, 2);
    }

    #[test]
    fn type_map_parsing() {
        let m = parse_type_map("# comment\nDisorder\tDISO\nDrug\tCHEM, DEVI\n").unwrap();
        assert_eq!(m["Drug"], BTreeSet::from(["CHEM".to_string(), "DEVI".to_string()]));
        assert!(parse_type_map("nope").is_err());
    }

    #[test]
    fn generation_covers_every_mention() {
        let kb = typed_kb();
        let idx = build_sparse_index(&kb).unwrap();
        let doc = from_ner_spans("d1", "lupus and lupulin", &[(0, 5, "DISO"), (10, 17, "CHEM")]).unwrap();
        let ds = Dataset::single("test", vec![doc]);
        let out = generate_candidates(&ds, &[&idx], DEFAULT_K, Some(&kb.kb_hash())).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.values().all(|v| v.len() == 1 && v[0].len() <= DEFAULT_K));
        let empty = Dataset::single("test", vec![]);
        assert!(generate_candidates(&empty, &[&idx], 64, None).unwrap().is_empty());
        assert!(matches!(
            generate_candidates(&ds, &[&idx], 64, Some("other")),
            Err(Error::KbHashMismatch { .. })
        ));
    }

    #[test]
    fn link_filters_before_truncation() {
        let kb = typed_kb();
        let idx = build_sparse_index(&kb).unwrap();
        let doc = from_ner_spans("d1", "lupulin", &[(0, 7, "DISO")]).unwrap();
        let ds = Dataset::single("test", vec![doc]);
        let map = identity_type_map(&kb);
        let opts = LinkOptions {
            k: 2,
            filter: Some((&kb, &map)),
        };
        let (lists, _) = link_dataset(&ds, &[&idx], &opts, None).unwrap();
        // The chemical is the best string match; filtering leaves one disorder.
        assert_eq!(lists[0].len(), 1);
        assert_ne!(lists[0].candidates[0].concept_id, "C1");
    }
}
