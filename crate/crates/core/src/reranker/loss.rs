//! Rank-regularized softmax loss of a linear scorer.
//!
//! `s_i = w · f_i + b` and
//! `L = -s_gold + ln Σ_j exp(s_j) + λ ‖s - c‖₂`.
//! The norm's gradient is `(s - c) / max(‖s - c‖₂, 1e-12)`, which is 0 at `s = c`.

use serde::{Deserialize, Serialize};

use super::features::{Batch, FeatureVec, CG_FEATURE, N_FEATURES};
use crate::error::{Error, Result};

pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ScorerParams {
    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; N_FEATURES],
            bias: 0.0,
        }
    }

    /// Unit weight on the CG score: scores reproduce the CG ranking.
    pub fn cg_only() -> Self {
        let mut p = Self::zeros();
        p.weights[CG_FEATURE] = 1.0;
        p
    }

    /// `[w_0, ..., w_n, b]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let (b, w) = v.split_last().expect("parameter vector is non-empty");
        Self {
            weights: w.to_vec(),
            bias: *b,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

pub fn score(params: &ScorerParams, f: &FeatureVec) -> f64 {
    let mut acc = 0.0;
    for (w, x) in params.weights.iter().zip(f) {
        acc += w * x;
    }
    acc + params.bias
}

pub fn score_candidates(params: &ScorerParams, batch: &Batch) -> Vec<f64> {
    batch.features.iter().map(|f| score(params, f)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub softmax: f64,
    /// `λ ‖s - c‖₂`.
    pub regularizer: f64,
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{what} is {x}")))
    }
}

/// Loss and its gradient with respect to the scores.
pub fn loss_wrt_scores(s: &[f64], c: &[f64], gold: usize, lambda: f64) -> Result<(LossParts, Vec<f64>)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if s.len() != c.len() || gold >= s.len() {
        return Err(Error::Config(format!(
            "batch shape: {} scores, {} targets, gold index {gold}",
            s.len(),
            c.len()
        )));
    }
    for (i, (si, ci)) in s.iter().zip(c).enumerate() {
        finite(*si, &format!("score {i}"))?;
        finite(*ci, &format!("target {i}"))?;
    }
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for si in s {
        z += (si - m).exp();
    }
    let lse = m + z.ln();
    let softmax = finite(lse - s[gold], "softmax loss")?;

    let mut sq = 0.0;
    for (si, ci) in s.iter().zip(c) {
        sq += (si - ci) * (si - ci);
    }
    let norm = sq.sqrt();
    let regularizer = finite(lambda * norm, "regularizer")?;
    let denom = norm.max(NORM_EPS);

    let mut grad = Vec::with_capacity(s.len());
    for (i, (si, ci)) in s.iter().zip(c).enumerate() {
        let p = (si - m).exp() / z;
        let indicator = if i == gold { 1.0 } else { 0.0 };
        grad.push(finite(p - indicator + lambda * (si - ci) / denom, "gradient")?);
    }
    Ok((
        LossParts {
            total: finite(softmax + regularizer, "loss")?,
            softmax,
            regularizer,
        },
        grad,
    ))
}

/// Loss of a batch and its gradient with respect to `[weights..., bias]`.
pub fn loss_and_grad(params: &ScorerParams, batch: &Batch, lambda: f64) -> Result<(LossParts, Vec<f64>)> {
    let s = score_candidates(params, batch);
    let (parts, ds) = loss_wrt_scores(&s, &batch.c, batch.gold, lambda)?;
    let n = params.weights.len();
    let mut grad = vec![0.0; n + 1];
    for (f, d) in batch.features.iter().zip(&ds) {
        for j in 0..n {
            grad[j] += d * f[j];
        }
        grad[n] += d;
    }
    for g in &grad {
        finite(*g, "parameter gradient")?;
    }
    Ok((parts, grad))
}

pub fn loss_only(params: &ScorerParams, batch: &Batch, lambda: f64) -> Result<LossParts> {
    let s = score_candidates(params, batch);
    loss_wrt_scores(&s, &batch.c, batch.gold, lambda).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_candidate_spot_value() {
        let (l, _) = loss_wrt_scores(&[2.0, 0.0], &[0.0, 0.0], 0, 0.0).unwrap();
        assert!((l.total - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-9);
        assert!((l.total - 0.126928).abs() < 1e-6);
    }

    #[test]
    fn regularizer_vanishes_at_targets() {
        let s = [0.3, -1.2, 0.0];
        let (l, g) = loss_wrt_scores(&s, &s, 1, 7.5).unwrap();
        assert_eq!(l.regularizer, 0.0);
        let (l0, g0) = loss_wrt_scores(&s, &s, 1, 0.0).unwrap();
        assert_eq!(l.total, l0.total);
        assert_eq!(g, g0);
    }

    #[test]
    fn stable_for_large_scores() {
        let (l, g) = loss_wrt_scores(&[1000.0, 0.0], &[0.0, 0.0], 1, 0.0).unwrap();
        assert!((l.total - 1000.0).abs() < 1e-9);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn non_finite_inputs_are_errors() {
        assert!(matches!(
            loss_wrt_scores(&[f64::NAN, 0.0], &[0.0, 0.0], 0, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(loss_wrt_scores(&[0.0, 0.0], &[0.0, 0.0], 0, -1.0).is_err());
    }

    #[test]
    fn zero_params_give_zero_scores_and_cg_params_give_targets() {
        let mut f1 = [0.0; N_FEATURES];
        f1[0] = 0.8;
        f1[2] = 0.3;
        let batch = Batch {
            candidate_ids: vec!["A".into(), "NIL".into()],
            features: vec![f1, super::super::features::nil_features()],
            c: vec![0.8, 0.0],
            gold: 0,
        };
        assert_eq!(score_candidates(&ScorerParams::zeros(), &batch), [0.0, 0.0]);
        assert_eq!(score_candidates(&ScorerParams::cg_only(), &batch), batch.c);
    }
}
