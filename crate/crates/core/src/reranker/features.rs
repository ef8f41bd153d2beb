//! Versioned feature set of the built-in scorer.
//!
//! | # | name              | value for a real candidate                                   |
//! |---|-------------------|--------------------------------------------------------------|
//! | 0 | `cg_score`        | candidate generation score                                   |
//! | 1 | `reciprocal_rank` | `1 / (rank + 1)`, rank 0-based in the generator's list        |
//! | 2 | `trigram_jaccard` | best Jaccard of padded character trigrams, mention vs alias  |
//! | 3 | `exact_match`     | 1 if the lowercased mention equals a lowercased alias        |
//! | 4 | `group_match`     | 1 if a concept group is allowed for the mention type         |
//! | 5 | `log_alias_count` | `ln(1 + number of aliases)`                                  |
//! | 6 | `nil`             | 0                                                            |
//!
//! The NIL candidate has every feature 0 except `nil = 1`. Features 2 and 3 also
//! consider the mention's long form when one is set.

use std::collections::BTreeSet;

use crate::candidates::{Candidate, CandidateList, NIL_CONCEPT_ID};
use crate::datamodel::Mention;
use crate::kb::KnowledgeBase;
use crate::pipeline::TypeGroupMap;
use crate::text::padded_char_ngrams;

pub const FEATURE_VERSION: u32 = 1;
pub const N_FEATURES: usize = 7;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "cg_score",
    "reciprocal_rank",
    "trigram_jaccard",
    "exact_match",
    "group_match",
    "log_alias_count",
    "nil",
];
pub const CG_FEATURE: usize = 0;
pub const NIL_FEATURE: usize = 6;

pub type FeatureVec = [f64; N_FEATURES];

pub struct FeatureContext<'a> {
    pub kb: &'a KnowledgeBase,
    pub type_map: &'a TypeGroupMap,
}

fn trigrams(s: &str) -> BTreeSet<String> {
    padded_char_ngrams(s, 3).into_iter().collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn nil_features() -> FeatureVec {
    let mut f = [0.0; N_FEATURES];
    f[NIL_FEATURE] = 1.0;
    f
}

pub fn candidate_features(ctx: &FeatureContext, mention: &Mention, cand: &Candidate, rank: usize) -> FeatureVec {
    let mut f = [0.0; N_FEATURES];
    f[0] = cand.score;
    f[1] = 1.0 / (rank as f64 + 1.0);
    let Some(concept) = ctx.kb.get(&cand.concept_id) else {
        return f;
    };
    let surfaces: Vec<&str> = std::iter::once(mention.text.as_str())
        .chain(mention.long_form.as_deref())
        .collect();
    let grams: Vec<BTreeSet<String>> = surfaces.iter().map(|s| trigrams(s)).collect();
    let lowered: Vec<String> = surfaces.iter().map(|s| s.to_lowercase()).collect();
    for a in &concept.aliases {
        let ag = trigrams(&a.value);
        for g in &grams {
            f[2] = f[2].max(jaccard(g, &ag));
        }
        if lowered.contains(&a.value.to_lowercase()) {
            f[3] = 1.0;
        }
    }
    if let Some(allowed) = mention.entity_type.as_deref().and_then(|t| ctx.type_map.get(t)) {
        if ctx.kb.groups_of(concept).iter().any(|g| allowed.contains(*g)) {
            f[4] = 1.0;
        }
    }
    f[5] = (1.0 + concept.aliases.len() as f64).ln();
    f
}

/// One mention's scoring unit: up to `k - 1` real candidates, then NIL.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub candidate_ids: Vec<String>,
    pub features: Vec<FeatureVec>,
    /// Regularization targets: scaled CG scores, 0 for NIL.
    pub c: Vec<f64>,
    pub gold: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn nil_index(&self) -> usize {
        self.features.len() - 1
    }

    /// Index of `concept_id`, or the NIL slot when it is not among the candidates.
    pub fn index_of(&self, concept_id: &str) -> usize {
        self.candidate_ids[..self.nil_index()]
            .iter()
            .position(|c| c == concept_id)
            .unwrap_or(self.nil_index())
    }
}

pub fn build_batch(ctx: &FeatureContext, mention: &Mention, cl: &CandidateList, k: usize, c_scale: f64) -> Batch {
    let mut b = Batch {
        candidate_ids: Vec::new(),
        features: Vec::new(),
        c: Vec::new(),
        gold: 0,
    };
    for (rank, cand) in cl.candidates.iter().filter(|c| !c.is_nil()).take(k.saturating_sub(1)).enumerate() {
        b.candidate_ids.push(cand.concept_id.clone());
        b.features.push(candidate_features(ctx, mention, cand, rank));
        b.c.push(c_scale * cand.score);
    }
    b.candidate_ids.push(NIL_CONCEPT_ID.into());
    b.features.push(nil_features());
    b.c.push(0.0);
    b.gold = b.nil_index();
    b
}
