//! Cross-lingual medical entity normalization: knowledge-base compilation,
//! candidate generation, re-ranking, evaluation and annotation projection.

pub mod abbrev;
pub mod candidates;
pub mod datamodel;
pub mod dense;
pub mod error;
pub mod eval;
pub mod http;
pub mod kb;
pub mod manifest;
pub mod pipeline;
pub mod projection;
pub mod reranker;
pub mod rng;
pub mod sparse;
pub mod text;

pub use candidates::{Candidate, CandidateList, Source, NIL_CONCEPT_ID};
pub use dense::{build_dense_index, query_dense, DenseIndex, EmbeddingProvider, HashNgramProvider};
pub use datamodel::{Dataset, Document, Mention, Passage, Span};
pub use error::{Error, Result};
pub use kb::{build_kb, load_kb, Concept, KbConfig, KnowledgeBase};
pub use sparse::{build_sparse_index, query_sparse, SparseIndex};
