//! TF-IDF cosine similarity over a day index vocabulary.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{RerankBackend, RerankScorer, ScorerError};
use crate::index::{tokenize_and_stem, InvertedIndex};

/// Sparse TF-IDF vectors with `idf(t) = ln((N + 1) / (df + 1)) + 1`.
///
/// The smoothed idf is positive for every term, including terms unseen in
/// the day index, so any text with at least one non-stopword has a nonzero
/// vector.
#[derive(Debug, Clone)]
pub struct TfIdfSpace {
    index: Arc<InvertedIndex>,
}

pub type SparseVec = BTreeMap<String, f64>;

impl TfIdfSpace {
    pub fn new(index: Arc<InvertedIndex>) -> Self {
        Self { index }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.index.num_docs() as f64;
        let df = self.index.document_frequency(term) as f64;
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    }

    pub fn vector(&self, text: &str) -> SparseVec {
        let mut v = SparseVec::new();
        for t in tokenize_and_stem(text) {
            *v.entry(t).or_insert(0.0) += 1.0;
        }
        for (t, x) in v.iter_mut() {
            *x *= self.idf(t);
        }
        v
    }

    /// Cosine of two texts, clipped to `[0, 1]`; 0 when either vector is zero.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine(&self.vector(a), &self.vector(b))
    }
}

pub fn cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Offline stand-in for the neural reranker.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    space: TfIdfSpace,
}

impl LexicalScorer {
    pub fn new(index: Arc<InvertedIndex>) -> Self {
        Self { space: TfIdfSpace::new(index) }
    }
}

impl RerankScorer for LexicalScorer {
    fn score_batch(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, ScorerError> {
        let q = self.space.vector(query);
        Ok(documents.iter().map(|d| cosine(&q, &self.space.vector(d))).collect())
    }
}

/// Registry entry producing a [`LexicalScorer`] per day.
#[derive(Debug, Default)]
pub struct LexicalBackend;

impl RerankBackend for LexicalBackend {
    fn name(&self) -> &str {
        "lexical"
    }

    fn for_day(&self, index: &Arc<InvertedIndex>) -> Arc<dyn RerankScorer> {
        Arc::new(LexicalScorer::new(Arc::clone(index)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SourceType, StreamItem};

    fn index(texts: &[&str]) -> Arc<InvertedIndex> {
        let items: Vec<StreamItem> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| StreamItem {
                doc_id: format!("d{i}"),
                event_id: "e".into(),
                request_id: "r".into(),
                source_type: SourceType::News,
                timestamp: 0,
                raw_text: t.to_string(),
                normalized_text: t.to_string(),
            })
            .collect();
        Arc::new(InvertedIndex::build(&items).unwrap())
    }

    #[test]
    fn identical_and_disjoint() {
        let s = LexicalScorer::new(index(&["fire smoke", "flood", "road"]));
        let out = s.score_batch("fire smoke", &["fire smoke", "flood road"]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn half_overlap_hand_computed() {
        // N = 4; df(fire) = 2, df(smoke) = 1, df(flood) = 1.
        let idx = index(&["fire smoke", "fire", "flood", "road"]);
        let space = TfIdfSpace::new(idx);
        let idf_fire = (5.0f64 / 3.0).ln() + 1.0;
        let idf_smoke = (5.0f64 / 2.0).ln() + 1.0;
        let idf_flood = idf_smoke;
        // a = (fire, smoke), b = (fire, flood): overlap only on fire.
        let expect = idf_fire * idf_fire
            / ((idf_fire.powi(2) + idf_smoke.powi(2)).sqrt() * (idf_fire.powi(2) + idf_flood.powi(2)).sqrt());
        let got = space.similarity("fire smoke", "fire flood");
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn empty_text_scores_zero() {
        let s = LexicalScorer::new(index(&["fire"]));
        assert_eq!(s.score_batch("", &["fire"]).unwrap(), [0.0]);
    }
}
