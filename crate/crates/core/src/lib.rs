//! Multi-stream crisis summarization.
//!
//! The crate turns per-day collections of social-media posts and news chunks
//! into ranked *event nuggets*: short, cited fact statements with an
//! importance score. The pipeline is
//!
//! ```text
//! corpus -> index (BM25 + Bo1) -> rerank -> factextract (LLM) -> nuggets
//! ```
//!
//! and [`eval`] scores the resulting summaries against graded meta-facts.
//! Every neural component sits behind a trait ([`rerank::RerankBackend`],
//! [`factextract::LlmClient`], [`eval::SimilarityScorer`]); implementations are
//! looked up by name in a [`registry::Registry`], so a run can swap the HTTP
//! sidecar for deterministic local stand-ins without touching the pipeline.

pub mod cache;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod factextract;
pub mod index;
pub mod nuggets;
pub mod order;
pub mod pipeline;
pub mod registry;
pub mod rerank;
pub mod sidecar;

pub use config::RunConfig;
pub use corpus::{RequestDay, SourceType, StreamItem};
pub use index::{InvertedIndex, QueryContext, ScoredDoc};
pub use nuggets::{EventNugget, Summary};
pub use rerank::RankedCluster;
