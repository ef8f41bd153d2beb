//! Training loop, model files and inference for the built-in scorer.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{build_batch, Batch, FeatureContext, FEATURE_VERSION, N_FEATURES};
use super::loss::{loss_and_grad, loss_only, score_candidates, ScorerParams};
use crate::candidates::{rank_order, Candidate, CandidateList, Source};
use crate::datamodel::{Dataset, Document, Mention};
use crate::error::{Error, Result};
use crate::eval::{evaluate, predictions_from_lists};
use crate::rng::SplitMix64;
use crate::text::sha256_hex;

/// Sufficient-decrease constant of the backtracking line search.
const ARMIJO_C1: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankerConfig {
    /// Batch size: `k - 1` real candidates plus NIL.
    pub k: usize,
    pub lambda: f64,
    /// Initial step of every update; halved until the batch loss decreases enough.
    pub learning_rate: f64,
    pub epochs: usize,
    /// Context characters per side in serialized mention encodings.
    pub ctx_len: usize,
    pub seed: u64,
    /// Multiplier applied to CG scores before they enter the regularizer.
    pub c_scale: f64,
    pub max_backtracks: u32,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        Self {
            k: 64,
            lambda: 1.0,
            learning_rate: 1e-2,
            epochs: 10,
            ctx_len: 128,
            seed: 42,
            c_scale: 1.0,
            max_backtracks: 40,
        }
    }
}

impl RerankerConfig {
    /// Parse a YAML config; missing keys take defaults, unknown keys are errors.
    pub fn from_yaml(raw: &str) -> Result<Self> {
        let cfg: Self = serde_yaml::from_str(raw).map_err(|e| Error::Config(format!("re-ranker config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidK { k: self.k, min: 2 });
        }
        let bad = |what: &str, v: f64| Error::Config(format!("{what} must be finite and positive, got {v}"));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(bad("learning_rate", self.learning_rate));
        }
        if !(self.c_scale > 0.0 && self.c_scale.is_finite()) {
            return Err(bad("c_scale", self.c_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Means over all training batches, evaluated with the parameters at epoch end.
    pub loss: f64,
    pub softmax_loss: f64,
    pub regularizer: f64,
    pub val_f1: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_mentions: usize,
    pub skipped_mentions: usize,
    pub batches: usize,
    pub nil_gold_batches: usize,
    /// Epoch 0 is the initial parameters.
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerModel {
    pub feature_version: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: RerankerConfig,
    pub train_report_digest: String,
}

impl RerankerModel {
    pub fn params(&self) -> ScorerParams {
        ScorerParams {
            weights: self.weights.clone(),
            bias: self.bias,
        }
    }

    /// A model that reproduces the CG ranking (NIL scores 0).
    pub fn cg_only(config: RerankerConfig) -> Self {
        let p = ScorerParams::cg_only();
        Self {
            feature_version: FEATURE_VERSION,
            weights: p.weights,
            bias: p.bias,
            config,
            train_report_digest: String::new(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.feature_version != FEATURE_VERSION {
            return Err(Error::FeatureVersion {
                model: self.feature_version,
                expected: FEATURE_VERSION,
            });
        }
        if self.weights.len() != N_FEATURES {
            return Err(Error::Config(format!(
                "model has {} weights, feature set has {N_FEATURES}",
                self.weights.len()
            )));
        }
        if !self.params().is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        self.config.validate()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        m.check()?;
        Ok(m)
    }
}

/// A dataset mention paired with its candidate list.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub document: &'a Document,
    pub mention: &'a Mention,
    pub candidates: &'a CandidateList,
}

/// Pair every mention of `ds` (dataset order) with its list; a missing list is an error.
pub fn align<'a>(ds: &'a Dataset, lists: &'a [CandidateList]) -> Result<Vec<Labeled<'a>>> {
    let by_key: HashMap<(&str, &str), &CandidateList> = lists.iter().map(|l| (l.key(), l)).collect();
    let mut out = Vec::new();
    for doc in ds.documents() {
        for m in &doc.mentions {
            let candidates = by_key.get(&(doc.id.as_str(), m.id.as_str())).ok_or_else(|| {
                Error::DocumentMismatch(format!("no candidate list for mention {}/{}", doc.id, m.id))
            })?;
            out.push(Labeled {
                document: doc,
                mention: m,
                candidates,
            });
        }
    }
    Ok(out)
}

/// Re-sort a batch by its scores; NIL stays in the list and abstains when first.
fn rerank_batch(params: &ScorerParams, batch: &Batch, source: &CandidateList) -> CandidateList {
    let sources: HashMap<&str, Source> = source.candidates.iter().map(|c| (c.concept_id.as_str(), c.source)).collect();
    let s = score_candidates(params, batch);
    let nil = batch.nil_index();
    let mut cands: Vec<Candidate> = batch
        .candidate_ids
        .iter()
        .zip(&s)
        .enumerate()
        .map(|(i, (id, score))| {
            let src = if i == nil { Source::Nil } else { sources[id.as_str()] };
            Candidate::new(id.clone(), *score, src)
        })
        .collect();
    cands.sort_by(rank_order);
    let abstain = cands.first().is_some_and(|c| c.is_nil());
    CandidateList {
        document_id: source.document_id.clone(),
        mention_id: source.mention_id.clone(),
        candidates: cands,
        abstain,
    }
}

pub fn rerank(model: &RerankerModel, ctx: &FeatureContext, mention: &Mention, cl: &CandidateList) -> Result<CandidateList> {
    model.check()?;
    let batch = build_batch(ctx, mention, cl, model.config.k, model.config.c_scale);
    Ok(rerank_batch(&model.params(), &batch, cl))
}

/// Re-rank every list of a dataset, returned in dataset order.
pub fn rerank_dataset(
    model: &RerankerModel,
    ctx: &FeatureContext,
    ds: &Dataset,
    lists: &[CandidateList],
) -> Result<Vec<CandidateList>> {
    align(ds, lists)?
        .iter()
        .map(|l| rerank(model, ctx, l.mention, l.candidates))
        .collect()
}

struct Prepared<'a> {
    batch: Batch,
    list: &'a CandidateList,
}

fn f1_at_1(params: &ScorerParams, ds: &Dataset, prepared: &[Prepared]) -> Result<f64> {
    let lists: Vec<CandidateList> = prepared.iter().map(|p| rerank_batch(params, &p.batch, p.list)).collect();
    let preds = predictions_from_lists(ds, &lists)?;
    Ok(evaluate(ds, &preds, &[1], None)?.f1_at_1)
}

fn epoch_means(params: &ScorerParams, batches: &[Batch], lambda: f64) -> Result<(f64, f64, f64)> {
    let (mut t, mut s, mut r) = (0.0, 0.0, 0.0);
    for b in batches {
        let l = loss_only(params, b, lambda)?;
        t += l.total;
        s += l.softmax;
        r += l.regularizer;
    }
    let n = batches.len() as f64;
    Ok((t / n, s / n, r / n))
}

/// One backtracking step on a single batch. Returns whether a step was taken.
fn armijo_step(theta: &mut Vec<f64>, batch: &Batch, cfg: &RerankerConfig) -> Result<bool> {
    let params = ScorerParams::from_vec(theta);
    let (l0, g) = loss_and_grad(&params, batch, cfg.lambda)?;
    let mut gg = 0.0;
    for x in &g {
        gg += x * x;
    }
    if gg == 0.0 {
        return Ok(false);
    }
    let mut eta = cfg.learning_rate;
    for _ in 0..=cfg.max_backtracks {
        let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect();
        let candidate = ScorerParams::from_vec(&cand);
        if candidate.is_finite() {
            if let Ok(l1) = loss_only(&candidate, batch, cfg.lambda) {
                if l1.total <= l0.total - ARMIJO_C1 * eta * gg {
                    *theta = cand;
                    return Ok(true);
                }
            }
        }
        eta *= 0.5;
    }
    Ok(false)
}

/// Train from the CG-only initialization and keep the parameters with the best
/// validation F1@1 (the training set stands in when no validation set is given).
pub fn train_reranker(
    train: (&Dataset, &[CandidateList]),
    val: Option<(&Dataset, &[CandidateList])>,
    ctx: &FeatureContext,
    cfg: &RerankerConfig,
) -> Result<(RerankerModel, TrainReport)> {
    cfg.validate()?;
    let train_aligned = align(train.0, train.1)?;
    let mut batches = Vec::new();
    let mut skipped = 0;
    for l in &train_aligned {
        let mut golds: Vec<&str> = Vec::new();
        for g in &l.mention.gold_concepts {
            if !golds.contains(&g.db_id.as_str()) {
                golds.push(&g.db_id);
            }
        }
        if golds.is_empty() {
            skipped += 1;
            continue;
        }
        let base = build_batch(ctx, l.mention, l.candidates, cfg.k, cfg.c_scale);
        for g in golds {
            let mut b = base.clone();
            b.gold = b.index_of(g);
            batches.push(b);
        }
    }
    if batches.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let nil_gold_batches = batches.iter().filter(|b| b.gold == b.nil_index()).count();

    let (val_ds, val_lists) = val.unwrap_or(train);
    let prepared: Vec<Prepared> = align(val_ds, val_lists)?
        .into_iter()
        .map(|l| Prepared {
            batch: build_batch(ctx, l.mention, l.candidates, cfg.k, cfg.c_scale),
            list: l.candidates,
        })
        .collect();

    let mut theta = ScorerParams::cg_only().to_vec();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut order: Vec<usize> = (0..batches.len()).collect();

    let initial = ScorerParams::from_vec(&theta);
    let (loss, softmax_loss, regularizer) = epoch_means(&initial, &batches, cfg.lambda)?;
    let val_f1 = f1_at_1(&initial, val_ds, &prepared)?;
    let mut epochs = vec![EpochStats {
        epoch: 0,
        loss,
        softmax_loss,
        regularizer,
        val_f1,
        accepted_steps: 0,
        rejected_steps: 0,
    }];
    let mut best = (val_f1, theta.clone(), 0);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut accepted, mut rejected) = (0, 0);
        for &i in &order {
            if armijo_step(&mut theta, &batches[i], cfg)? {
                accepted += 1;
            } else {
                rejected += 1;
            }
        }
        let params = ScorerParams::from_vec(&theta);
        let (loss, softmax_loss, regularizer) = epoch_means(&params, &batches, cfg.lambda)?;
        let val_f1 = f1_at_1(&params, val_ds, &prepared)?;
        epochs.push(EpochStats {
            epoch,
            loss,
            softmax_loss,
            regularizer,
            val_f1,
            accepted_steps: accepted,
            rejected_steps: rejected,
        });
        if val_f1 > best.0 {
            best = (val_f1, theta.clone(), epoch);
        }
    }

    let report = TrainReport {
        train_mentions: train_aligned.len(),
        skipped_mentions: skipped,
        batches: batches.len(),
        nil_gold_batches,
        epochs,
        best_epoch: best.2,
        best_val_f1: best.0,
    };
    let params = ScorerParams::from_vec(&best.1);
    let model = RerankerModel {
        feature_version: FEATURE_VERSION,
        weights: params.weights,
        bias: params.bias,
        config: cfg.clone(),
        train_report_digest: sha256_hex(serde_json::to_string(&report).expect("report serializes").as_bytes()),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::NIL_CONCEPT_ID;
    use crate::datamodel::{from_ner_spans, ConceptRef};
    use crate::kb::{default_group_map, Alias, Concept, KnowledgeBase};
    use crate::pipeline::identity_type_map;

    fn kb() -> KnowledgeBase {
        let c = |id: &str, names: &[&str]| Concept {
            concept_id: id.into(),
            canonical_name: names[0].into(),
            semantic_types: vec!["T047".into()],
            aliases: names.iter().map(|n| Alias::new(*n, "en")).collect(),
        };
        KnowledgeBase::new(
            "t",
            vec![c("A", &["lupus"]), c("B", &["lupus vulgaris", "lupus tuberculosis"])],
            default_group_map(),
        )
        .unwrap()
    }

    fn list(doc: &str, m: &str, c: &[(&str, f64)]) -> CandidateList {
        CandidateList::new(doc, m, c.iter().map(|(id, s)| Candidate::new(*id, *s, Source::Sparse)).collect())
    }

    #[test]
    fn cg_only_model_preserves_order() {
        let kb = kb();
        let map = identity_type_map(&kb);
        let ctx = FeatureContext { kb: &kb, type_map: &map };
        let doc = from_ner_spans("d", "lupus", &[(0, 5, "DISO")]).unwrap();
        let cl = list("d", "d-0", &[("B", 0.6), ("A", 0.4)]);
        let out = rerank(&RerankerModel::cg_only(RerankerConfig::default()), &ctx, &doc.mentions[0], &cl).unwrap();
        let ids: Vec<&str> = out.concept_ids().collect();
        assert_eq!(ids, ["B", "A", NIL_CONCEPT_ID]);
        assert!(!out.abstain);
    }

    #[test]
    fn empty_list_abstains() {
        let kb = kb();
        let map = identity_type_map(&kb);
        let ctx = FeatureContext { kb: &kb, type_map: &map };
        let doc = from_ner_spans("d", "xyz", &[(0, 3, "DISO")]).unwrap();
        let out = rerank(
            &RerankerModel::cg_only(RerankerConfig::default()),
            &ctx,
            &doc.mentions[0],
            &CandidateList::empty("d", "d-0"),
        )
        .unwrap();
        assert!(out.abstain);
        assert_eq!(out.concept_ids().collect::<Vec<_>>(), [NIL_CONCEPT_ID]);
        assert!(out.top1().is_none());
    }

    #[test]
    fn feature_version_mismatch_rejected() {
        let kb = kb();
        let map = identity_type_map(&kb);
        let ctx = FeatureContext { kb: &kb, type_map: &map };
        let doc = from_ner_spans("d", "lupus", &[(0, 5, "DISO")]).unwrap();
        let mut m = RerankerModel::cg_only(RerankerConfig::default());
        m.feature_version = 99;
        assert!(matches!(
            rerank(&m, &ctx, &doc.mentions[0], &list("d", "d-0", &[])),
            Err(Error::FeatureVersion { model: 99, .. })
        ));
    }

    #[test]
    fn empty_training_set() {
        let kb = kb();
        let map = identity_type_map(&kb);
        let ctx = FeatureContext { kb: &kb, type_map: &map };
        let ds = Dataset::single("train", vec![]);
        assert!(matches!(
            train_reranker((&ds, &[]), None, &ctx, &RerankerConfig::default()),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn lexical_feature_fixes_misranking_and_is_deterministic() {
        let kb = kb();
        let map = identity_type_map(&kb);
        let ctx = FeatureContext { kb: &kb, type_map: &map };
        let mut doc = from_ner_spans("d", "lupus", &[(0, 5, "DISO")]).unwrap();
        doc.mentions[0].gold_concepts = vec![ConceptRef::new("UMLS", "A")];
        let ds = Dataset::single("train", vec![doc]);
        let lists = vec![list("d", "d-0", &[("B", 0.7), ("A", 0.6)])];
        let cfg = RerankerConfig {
            lambda: 0.0,
            learning_rate: 0.5,
            epochs: 5,
            ..Default::default()
        };
        let (m1, r1) = train_reranker((&ds, &lists), None, &ctx, &cfg).unwrap();
        let (m2, _) = train_reranker((&ds, &lists), None, &ctx, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.epochs[0].val_f1, 0.0);
        assert_eq!(r1.best_val_f1, 1.0);
        let model_path = tempfile::NamedTempFile::new().unwrap();
        m1.save(model_path.path()).unwrap();
        assert_eq!(RerankerModel::load(model_path.path()).unwrap(), m1);
    }
}
