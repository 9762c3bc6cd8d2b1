//! Text similarity backends for nugget/meta-fact matching.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::cache::{content_hash_parts, DiskCache};
use crate::sidecar::{SidecarClient, SidecarError};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error("similarity {0} outside [0, 1]")]
    Range(f64),
}

/// Pairwise similarity in `[0, 1]`.
pub trait SimilarityScorer: Send + Sync {
    fn name(&self) -> &str;

    /// `out[i][j] = sim(candidates[i], references[j])`.
    fn matrix(&self, candidates: &[&str], references: &[&str]) -> Result<Vec<Vec<f64>>, SimilarityError>;

    /// Worth memoizing on disk.
    fn cacheable(&self) -> bool {
        false
    }

    fn sim(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        Ok(self.matrix(&[a], &[b])?[0][0])
    }
}

/// F1 over lowercased whitespace-token multisets; 0 when either side is empty.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let ta: Vec<String> = a.split_whitespace().map(str::to_lowercase).collect();
    let tb: Vec<String> = b.split_whitespace().map(str::to_lowercase).collect();
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tb {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &ta {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / ta.len() as f64;
    let r = overlap as f64 / tb.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1;

impl SimilarityScorer for TokenF1 {
    fn name(&self) -> &str {
        "token_f1"
    }

    fn matrix(&self, candidates: &[&str], references: &[&str]) -> Result<Vec<Vec<f64>>, SimilarityError> {
        Ok(candidates.iter().map(|c| references.iter().map(|r| token_f1(c, r)).collect()).collect())
    }
}

/// Embedding-based F1 from the sidecar's `/similarity` endpoint.
pub struct RemoteSimilarity {
    client: Arc<SidecarClient>,
}

impl RemoteSimilarity {
    pub fn new(client: Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl SimilarityScorer for RemoteSimilarity {
    fn name(&self) -> &str {
        "remote"
    }

    fn matrix(&self, candidates: &[&str], references: &[&str]) -> Result<Vec<Vec<f64>>, SimilarityError> {
        if candidates.is_empty() || references.is_empty() {
            return Ok(vec![Vec::new(); candidates.len()]);
        }
        Ok(self.client.similarity(candidates, references)?)
    }

    fn cacheable(&self) -> bool {
        true
    }
}

/// Caches individual `(candidate, reference)` scores. Rows with any miss are
/// requested from the inner scorer in one call.
pub struct CachedSimilarity {
    inner: Arc<dyn SimilarityScorer>,
    cache: Arc<DiskCache>,
}

impl CachedSimilarity {
    pub const NAMESPACE: &'static str = "similarity";

    pub fn new(inner: Arc<dyn SimilarityScorer>, cache: Arc<DiskCache>) -> Self {
        Self { inner, cache }
    }

    fn key(&self, a: &str, b: &str) -> String {
        content_hash_parts(&[self.inner.name(), a, b])
    }
}

impl SimilarityScorer for CachedSimilarity {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn matrix(&self, candidates: &[&str], references: &[&str]) -> Result<Vec<Vec<f64>>, SimilarityError> {
        let mut out: Vec<Vec<Option<f64>>> = candidates
            .iter()
            .map(|c| references.iter().map(|r| self.cache.get(Self::NAMESPACE, &self.key(c, r))).collect())
            .collect();
        let missing: Vec<usize> = (0..candidates.len()).filter(|&i| out[i].iter().any(Option::is_none)).collect();
        if !missing.is_empty() {
            let cands: Vec<&str> = missing.iter().map(|&i| candidates[i]).collect();
            let fresh = self.inner.matrix(&cands, references)?;
            for (&i, row) in missing.iter().zip(fresh) {
                for (j, v) in row.into_iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(SimilarityError::Range(v));
                    }
                    if let Err(e) = self.cache.put(Self::NAMESPACE, &self.key(candidates[i], references[j]), &v) {
                        log::warn!("similarity cache write failed: {e}");
                    }
                    out[i][j] = Some(v);
                }
            }
        }
        Ok(out.into_iter().map(|row| row.into_iter().map(|v| v.expect("filled above")).collect()).collect())
    }

    fn cacheable(&self) -> bool {
        self.inner.cacheable()
    }
}
