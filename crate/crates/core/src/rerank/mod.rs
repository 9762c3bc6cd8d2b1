//! Second-stage reranking of first-stage candidates.

mod lexical;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{content_hash_parts, DiskCache};
use crate::corpus::StreamItem;
use crate::index::{InvertedIndex, QueryContext, ScoredDoc};
use crate::order::{self, quantize6};
use crate::sidecar::{SidecarClient, SidecarError};

pub use lexical::{cosine, LexicalBackend, LexicalScorer, SparseVec, TfIdfSpace};

/// Documents are cut to this many whitespace tokens before scoring.
pub const MAX_DOC_TOKENS: usize = 480;

/// Documents sent to a scorer per call.
const BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error("scorer returned {got} scores for {expected} documents")]
    Length { expected: usize, got: usize },
    #[error("scorer returned invalid relevance {0}")]
    Range(f64),
}

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("scoring `{doc_id}` failed: {source}")]
    Scorer { doc_id: String, source: ScorerError },
    #[error("candidate `{0}` is not in the collection")]
    MissingDoc(String),
}

/// Relevance of documents to a question, each in `[0, 1]`.
///
/// Implementations are deterministic for fixed inputs, and scoring a batch
/// equals scoring its elements one at a time.
pub trait RerankScorer: Send + Sync {
    fn score_batch(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, ScorerError>;

    fn score(&self, query: &str, document: &str) -> Result<f64, ScorerError> {
        let mut v = self.score_batch(query, &[document])?;
        v.pop().ok_or(ScorerError::Length { expected: 1, got: 0 })
    }
}

/// A named reranker that can be bound to one day's collection.
pub trait RerankBackend: Send + Sync {
    fn name(&self) -> &str;
    fn for_day(&self, index: &Arc<InvertedIndex>) -> Arc<dyn RerankScorer>;

    /// Scores depend only on (query, document), so they may be cached
    /// across days and runs.
    fn cacheable(&self) -> bool {
        false
    }
}

/// Scores through the sidecar's `/rerank` endpoint.
pub struct RemoteBackend {
    client: Arc<SidecarClient>,
}

impl RemoteBackend {
    pub fn new(client: Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl RerankScorer for RemoteBackend {
    fn score_batch(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, ScorerError> {
        if documents.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.client.rerank(query, documents)?)
    }
}

impl RerankBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn for_day(&self, _index: &Arc<InvertedIndex>) -> Arc<dyn RerankScorer> {
        Arc::new(Self { client: Arc::clone(&self.client) })
    }

    fn cacheable(&self) -> bool {
        true
    }
}

/// Memoizes (query, document) scores in a [`DiskCache`].
pub struct CachedScorer {
    inner: Arc<dyn RerankScorer>,
    cache: Arc<DiskCache>,
}

impl CachedScorer {
    pub const NAMESPACE: &'static str = "rerank";

    pub fn new(inner: Arc<dyn RerankScorer>, cache: Arc<DiskCache>) -> Self {
        Self { inner, cache }
    }
}

impl RerankScorer for CachedScorer {
    fn score_batch(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, ScorerError> {
        let keys: Vec<String> = documents.iter().map(|d| content_hash_parts(&[query, d])).collect();
        let mut out: Vec<Option<f64>> = keys.iter().map(|k| self.cache.get::<f64>(Self::NAMESPACE, k)).collect();
        let missing: Vec<usize> = (0..documents.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let docs: Vec<&str> = missing.iter().map(|&i| documents[i]).collect();
            let scores = self.inner.score_batch(query, &docs)?;
            if scores.len() != docs.len() {
                return Err(ScorerError::Length { expected: docs.len(), got: scores.len() });
            }
            for (&i, s) in missing.iter().zip(scores) {
                if let Err(e) = self.cache.put(Self::NAMESPACE, &keys[i], &s) {
                    log::warn!("rerank cache write failed: {e}");
                }
                out[i] = Some(s);
            }
        }
        Ok(out.into_iter().map(|s| s.expect("filled above")).collect())
    }
}

/// A reranked document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub doc_id: String,
    #[serde(rename = "unixTimestamp")]
    pub timestamp: i64,
    pub text: String,
    #[serde(with = "order::decimal6")]
    pub relevance: f64,
}

/// The reranked, relevance-scored candidates for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCluster {
    #[serde(flatten)]
    pub query: QueryContext,
    pub entries: Vec<ClusterEntry>,
}

impl RankedCluster {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_relevance(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.relevance).reduce(f64::min)
    }

    pub fn earliest_timestamp(&self) -> Option<i64> {
        self.entries.iter().map(|e| e.timestamp).min()
    }
}

/// Truncates to the first [`MAX_DOC_TOKENS`] whitespace tokens.
pub fn truncate_tokens(text: &str) -> std::borrow::Cow<'_, str> {
    match text.split_whitespace().nth(MAX_DOC_TOKENS) {
        None => text.into(),
        Some(_) => text.split_whitespace().take(MAX_DOC_TOKENS).collect::<Vec<_>>().join(" ").into(),
    }
}

/// Scores every candidate against the question and keeps the best `cutoff`.
///
/// Relevances are rounded to six decimals so that persisted clusters reload
/// bit-identically. Output order is relevance descending, then timestamp,
/// then doc id; it does not depend on the order of `candidates`.
pub fn rerank(
    candidates: &[ScoredDoc],
    items: &HashMap<&str, &StreamItem>,
    query: &QueryContext,
    scorer: &dyn RerankScorer,
    cutoff: usize,
) -> Result<RankedCluster, RerankError> {
    let mut docs: Vec<&StreamItem> = Vec::with_capacity(candidates.len());
    for c in candidates {
        let item = items.get(c.doc_id.as_str()).ok_or_else(|| RerankError::MissingDoc(c.doc_id.clone()))?;
        if !docs.iter().any(|d| d.doc_id == item.doc_id) {
            docs.push(item);
        }
    }
    docs.sort_by(|a, b| (a.timestamp, &a.doc_id).cmp(&(b.timestamp, &b.doc_id)));

    let mut entries = Vec::with_capacity(docs.len());
    for chunk in docs.chunks(BATCH) {
        let texts: Vec<std::borrow::Cow<'_, str>> = chunk.iter().map(|d| truncate_tokens(&d.normalized_text)).collect();
        let refs: Vec<&str> = texts.iter().map(|t| t.as_ref()).collect();
        let fail = |source| RerankError::Scorer { doc_id: chunk[0].doc_id.clone(), source };
        let scores = scorer.score_batch(&query.query_text, &refs).map_err(fail)?;
        if scores.len() != chunk.len() {
            return Err(fail(ScorerError::Length { expected: chunk.len(), got: scores.len() }));
        }
        for (doc, s) in chunk.iter().zip(scores) {
            if !(0.0..=1.0).contains(&s) {
                return Err(RerankError::Scorer { doc_id: doc.doc_id.clone(), source: ScorerError::Range(s) });
            }
            entries.push(ClusterEntry {
                doc_id: doc.doc_id.clone(),
                timestamp: doc.timestamp,
                text: doc.normalized_text.clone(),
                relevance: quantize6(s),
            });
        }
    }
    entries.sort_by(|a, b| order::ranked((a.relevance, a.timestamp, &a.doc_id), (b.relevance, b.timestamp, &b.doc_id)));
    entries.truncate(cutoff);
    Ok(RankedCluster { query: query.clone(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceType;
    use proptest::prelude::*;

    struct Constant(f64);
    impl RerankScorer for Constant {
        fn score_batch(&self, _: &str, d: &[&str]) -> Result<Vec<f64>, ScorerError> {
            Ok(vec![self.0; d.len()])
        }
    }

    /// Deterministic pseudo-relevance from the document text.
    struct Hashy;
    impl RerankScorer for Hashy {
        fn score_batch(&self, _: &str, d: &[&str]) -> Result<Vec<f64>, ScorerError> {
            Ok(d.iter().map(|t| (crate::cache::content_hash(t).as_bytes()[0] % 10) as f64 / 10.0).collect())
        }
    }

    struct Broken;
    impl RerankScorer for Broken {
        fn score_batch(&self, _: &str, d: &[&str]) -> Result<Vec<f64>, ScorerError> {
            Ok(vec![1.5; d.len()])
        }
    }

    fn items(n: usize) -> Vec<StreamItem> {
        (0..n)
            .map(|i| StreamItem {
                doc_id: format!("d{i:03}"),
                event_id: "e".into(),
                request_id: "r".into(),
                source_type: SourceType::Reddit,
                timestamp: (n - i) as i64,
                raw_text: format!("text {i}"),
                normalized_text: format!("text {i}"),
            })
            .collect()
    }

    fn query() -> QueryContext {
        QueryContext {
            query_id: "q".into(),
            event_id: "e".into(),
            request_id: "r".into(),
            query_text: "what happened".into(),
            indicative_terms: vec![],
        }
    }

    fn candidates(items: &[StreamItem]) -> Vec<ScoredDoc> {
        items.iter().map(|i| ScoredDoc { doc_id: i.doc_id.clone(), score: 1.0 }).collect()
    }

    fn lookup(items: &[StreamItem]) -> HashMap<&str, &StreamItem> {
        items.iter().map(|i| (i.doc_id.as_str(), i)).collect()
    }

    #[test]
    fn cuts_to_thirty() {
        let its = items(100);
        let out = rerank(&candidates(&its), &lookup(&its), &query(), &Hashy, 30).unwrap();
        assert_eq!(out.entries.len(), 30);
        assert!(out.entries.windows(2).all(|w| w[0].relevance >= w[1].relevance));
    }

    #[test]
    fn cut_exceeding_input() {
        let its = items(10);
        let out = rerank(&candidates(&its), &lookup(&its), &query(), &Hashy, 30).unwrap();
        assert_eq!(out.entries.len(), 10);
    }

    #[test]
    fn constant_scorer_falls_back_to_timestamp_then_id() {
        let mut its = items(4);
        its[0].timestamp = its[1].timestamp;
        let out = rerank(&candidates(&its), &lookup(&its), &query(), &Constant(0.5), 30).unwrap();
        let ids: Vec<&str> = out.entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["d003", "d002", "d000", "d001"]);
    }

    #[test]
    fn out_of_range_score_names_doc() {
        let its = items(2);
        let err = rerank(&candidates(&its), &lookup(&its), &query(), &Broken, 30).unwrap_err();
        assert!(err.to_string().contains("d001") || err.to_string().contains("d000"), "{err}");
    }

    #[test]
    fn unknown_candidate_is_error() {
        let its = items(2);
        let mut c = candidates(&its);
        c.push(ScoredDoc { doc_id: "nope".into(), score: 0.0 });
        assert!(matches!(rerank(&c, &lookup(&its), &query(), &Constant(0.1), 30), Err(RerankError::MissingDoc(_))));
    }

    #[test]
    fn long_documents_truncated() {
        let long = (0..600).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let t = truncate_tokens(&long);
        assert_eq!(t.split_whitespace().count(), MAX_DOC_TOKENS);
        assert_eq!(truncate_tokens("a  b"), "a  b");
    }

    #[test]
    fn cached_scorer_reuses_scores() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::new(dir.path()));
        let s = CachedScorer::new(Arc::new(Hashy), Arc::clone(&cache));
        let first = s.score_batch("q", &["a", "b"]).unwrap();
        let second = s.score_batch("q", &["b", "a", "c"]).unwrap();
        assert_eq!(first, [second[1], second[0]]);
        assert_eq!(cache.hits(), 2);
    }

    #[test]
    fn relevance_round_trips_through_json() {
        let its = items(20);
        let out = rerank(&candidates(&its), &lookup(&its), &query(), &Hashy, 30).unwrap();
        let s = serde_json::to_string(&out).unwrap();
        let back: RankedCluster = serde_json::from_str(&s).unwrap();
        assert_eq!(back, out);
    }

    proptest! {
        #[test]
        fn permutation_invariant_subset(seed in any::<u64>(), n in 1usize..40, cut in 1usize..50) {
            let its = items(n);
            let mut c = candidates(&its);
            let mut rng = seed;
            for i in (1..c.len()).rev() {
                rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                c.swap(i, (rng >> 33) as usize % (i + 1));
            }
            let base = rerank(&candidates(&its), &lookup(&its), &query(), &Hashy, cut).unwrap();
            let perm = rerank(&c, &lookup(&its), &query(), &Hashy, cut).unwrap();
            prop_assert_eq!(&base, &perm);
            prop_assert!(base.entries.iter().all(|e| its.iter().any(|i| i.doc_id == e.doc_id)));
            prop_assert_eq!(base.entries.len(), cut.min(n));
        }
    }
}
