//! Per-day inverted index with BM25 ranking and Bo1 query expansion.

mod bo1;
mod store;
mod tokenize;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::StreamItem;
use crate::order;

pub use bo1::{bo1_expand, bo1_weight, Bo1Params};
pub use store::{load_cached_index, save_cached_index, INDEX_FORMAT_VERSION};
pub use tokenize::{tokenize_and_stem, STOPWORDS};

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("empty collection")]
    EmptyCollection,
    #[error("unknown doc_id `{0}`")]
    UnknownDoc(String),
    #[error("duplicate doc_id `{0}`")]
    DuplicateDoc(String),
}

/// BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedDoc {
    pub doc_id: String,
    pub timestamp: i64,
    pub length: u32,
    /// Term frequencies, sorted by term.
    pub terms: Vec<(String, u32)>,
}

/// Term statistics for one (event, request-day) collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    docs: Vec<IndexedDoc>,
    postings: BTreeMap<String, Vec<Posting>>,
    collection_tf: BTreeMap<String, u64>,
    avg_doc_length: f64,
    #[serde(skip)]
    positions: HashMap<String, usize>,
}

impl InvertedIndex {
    /// Indexes the normalized text of `items`.
    pub fn build(items: &[StreamItem]) -> Result<Self, IndexError> {
        if items.is_empty() {
            return Err(IndexError::EmptyCollection);
        }
        let mut docs = Vec::with_capacity(items.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut collection_tf: BTreeMap<String, u64> = BTreeMap::new();
        for (pos, item) in items.iter().enumerate() {
            let tokens = tokenize_and_stem(&item.normalized_text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, &n) in &tf {
                postings.entry(term.clone()).or_default().push(Posting { doc: pos as u32, tf: n });
                *collection_tf.entry(term.clone()).or_default() += u64::from(n);
            }
            docs.push(IndexedDoc {
                doc_id: item.doc_id.clone(),
                timestamp: item.timestamp,
                length: tokens.len() as u32,
                terms: tf.into_iter().collect(),
            });
        }
        let total: u64 = docs.iter().map(|d| u64::from(d.length)).sum();
        let avg_doc_length = total as f64 / docs.len() as f64;
        let mut index = Self { docs, postings, collection_tf, avg_doc_length, positions: HashMap::new() };
        index.rebuild_positions()?;
        Ok(index)
    }

    pub(crate) fn rebuild_positions(&mut self) -> Result<(), IndexError> {
        self.positions.clear();
        for (i, d) in self.docs.iter().enumerate() {
            if self.positions.insert(d.doc_id.clone(), i).is_some() {
                return Err(IndexError::DuplicateDoc(d.doc_id.clone()));
            }
        }
        Ok(())
    }

    /// Number of documents.
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn docs(&self) -> &[IndexedDoc] {
        &self.docs
    }

    pub fn doc(&self, doc_id: &str) -> Option<&IndexedDoc> {
        self.positions.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc(doc_id).map(|d| d.length)
    }

    /// `(doc_id, tf)` pairs for `term`, in collection order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|ps| ps.iter().map(|p| (self.docs[p.doc as usize].doc_id.as_str(), p.tf)).collect())
            .unwrap_or_default()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn collection_tf(&self, term: &str) -> u64 {
        self.collection_tf.get(term).copied().unwrap_or(0)
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.postings.contains_key(term)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    fn term_tf(doc: &IndexedDoc, term: &str) -> u32 {
        doc.terms.binary_search_by(|(t, _)| t.as_str().cmp(term)).map_or(0, |i| doc.terms[i].1)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, params: Bm25Params, term: &str, tf: u32, dl: u32) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - params.b + params.b * f64::from(dl) / self.avg_doc_length;
        self.idf(term) * (tf * (params.k1 + 1.0)) / (tf + params.k1 * norm)
    }

    /// BM25 score of one document for a weighted query.
    pub fn bm25_score(&self, params: Bm25Params, query: &WeightedQuery, doc_id: &str) -> Result<f64, IndexError> {
        let doc = self.doc(doc_id).ok_or_else(|| IndexError::UnknownDoc(doc_id.to_string()))?;
        let mut score = 0.0;
        for (term, weight) in query.iter() {
            let tf = Self::term_tf(doc, term);
            if tf > 0 {
                score += self.term_score(params, term, tf, doc.length) * weight;
            }
        }
        Ok(score)
    }

    /// Scores every document containing at least one query term, sorted by
    /// the shared ranking order.
    pub fn rank(&self, params: Bm25Params, query: &WeightedQuery) -> Vec<ScoredDoc> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (term, weight) in query.iter() {
            for p in self.postings.get(term).into_iter().flatten() {
                let dl = self.docs[p.doc as usize].length;
                *acc.entry(p.doc).or_insert(0.0) += self.term_score(params, term, p.tf, dl) * weight;
            }
        }
        let mut out: Vec<(ScoredDoc, i64)> = acc
            .into_iter()
            .map(|(d, score)| {
                let doc = &self.docs[d as usize];
                (ScoredDoc { doc_id: doc.doc_id.clone(), score }, doc.timestamp)
            })
            .collect();
        out.sort_by(|(a, at), (b, bt)| order::ranked((a.score, *at, &a.doc_id), (b.score, *bt, &b.doc_id)));
        out.into_iter().map(|(d, _)| d).collect()
    }
}

/// A bag of query terms with real-valued weights, ordered by term.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedQuery {
    terms: BTreeMap<String, f64>,
}

impl WeightedQuery {
    /// Each occurrence contributes weight 1.
    pub fn from_terms<S: AsRef<str>>(terms: &[S]) -> Self {
        let mut q = Self::default();
        for t in terms {
            q.add(t.as_ref(), 1.0);
        }
        q
    }

    pub fn add(&mut self, term: &str, weight: f64) {
        *self.terms.entry(term.to_string()).or_insert(0.0) += weight;
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.terms.get(term).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.terms.iter().map(|(t, &w)| (t.as_str(), w))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// An (event, request-day, query) triple: the unit of pipeline work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryContext {
    #[serde(rename = "queryID")]
    pub query_id: String,
    #[serde(rename = "eventID")]
    pub event_id: String,
    #[serde(rename = "requestID")]
    pub request_id: String,
    #[serde(rename = "queryText")]
    pub query_text: String,
    #[serde(rename = "indicativeTerms", default)]
    pub indicative_terms: Vec<String>,
}

impl QueryContext {
    /// Stemmed query text followed by stemmed indicative terms.
    pub fn first_stage_terms(&self) -> Vec<String> {
        let mut terms = tokenize_and_stem(&self.query_text);
        for t in &self.indicative_terms {
            terms.extend(tokenize_and_stem(t));
        }
        terms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// First-stage retrieval settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieveParams {
    pub bm25: Bm25Params,
    pub bo1: Bo1Params,
    /// Number of candidates kept after the expanded pass.
    pub cutoff: usize,
}

impl Default for RetrieveParams {
    fn default() -> Self {
        Self { bm25: Bm25Params::default(), bo1: Bo1Params::default(), cutoff: 250 }
    }
}

/// BM25 on the query terms, Bo1 expansion from that ranking, then a second
/// BM25 pass with the expanded weighted query, cut to `params.cutoff`.
pub fn retrieve(index: &InvertedIndex, query: &QueryContext, params: &RetrieveParams) -> Vec<ScoredDoc> {
    let terms = query.first_stage_terms();
    let first = index.rank(params.bm25, &WeightedQuery::from_terms(&terms));
    if first.is_empty() {
        return first;
    }
    let expanded = bo1_expand(index, &terms, &first, params.bo1);
    let mut second = index.rank(params.bm25, &expanded);
    second.truncate(params.cutoff);
    second
}
