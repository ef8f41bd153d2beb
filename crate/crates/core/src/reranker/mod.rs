//! Candidate re-ranking with a NIL option and a rank-regularized softmax loss.
//!
//! The built-in scorer is linear over a small versioned feature set, which keeps
//! the loss convex in the parameters and the gradients checkable. The serialized
//! mention/concept encodings are exported for external cross-encoder backends.

pub mod encoding;
pub mod features;
pub mod loss;
pub mod train;

pub use encoding::{encode_batch, encode_concept, encode_mention, EncodedBatch, MentionEncoding};
pub use features::{build_batch, Batch, FeatureContext, FEATURE_NAMES, FEATURE_VERSION, N_FEATURES};
pub use loss::{loss_and_grad, loss_wrt_scores, score_candidates, LossParts, ScorerParams};
pub use train::{align, rerank, rerank_dataset, train_reranker, EpochStats, Labeled, RerankerConfig, RerankerModel, TrainReport};
