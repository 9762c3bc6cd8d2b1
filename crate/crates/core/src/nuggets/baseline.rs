//! Document-level baselines: top-k by relevance, and maximal marginal
//! relevance over TF-IDF cosine.

use std::collections::HashMap;

use super::{assign_ids, truncate_at_word, EventNugget, NuggetError, Summary, NUGGET_CHAR_LIMIT};
use crate::order;
use crate::rerank::{cosine, RankedCluster, SparseVec, TfIdfSpace};

/// One document in the pooled candidate set of a request day.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDoc {
    pub doc_id: String,
    pub query_id: String,
    pub text: String,
    pub relevance: f64,
    pub timestamp: i64,
}

/// Pools every cluster's entries, keeping each document once at its highest
/// relevance, ordered by relevance, timestamp, doc id.
pub fn pool_documents(clusters: &[RankedCluster]) -> Vec<PooledDoc> {
    let mut best: HashMap<&str, PooledDoc> = HashMap::new();
    for c in clusters {
        for e in &c.entries {
            let cand = PooledDoc {
                doc_id: e.doc_id.clone(),
                query_id: c.query.query_id.clone(),
                text: e.text.clone(),
                relevance: e.relevance,
                timestamp: e.timestamp,
            };
            match best.get(e.doc_id.as_str()) {
                Some(cur) if cur.relevance >= e.relevance => {}
                _ => {
                    best.insert(&e.doc_id, cand);
                }
            }
        }
    }
    let mut pool: Vec<PooledDoc> = best.into_values().collect();
    pool.sort_by(|a, b| order::ranked((a.relevance, a.timestamp, &a.doc_id), (b.relevance, b.timestamp, &b.doc_id)));
    pool
}

fn day_of(clusters: &[RankedCluster]) -> (String, String) {
    clusters.first().map(|c| (c.query.event_id.clone(), c.query.request_id.clone())).unwrap_or_default()
}

fn doc_nugget(doc: &PooledDoc, event_id: &str, request_id: &str, importance: f64) -> EventNugget {
    EventNugget {
        nugget_id: String::new(),
        event_id: event_id.to_string(),
        request_id: request_id.to_string(),
        query_id: doc.query_id.clone(),
        text: truncate_at_word(&doc.text, NUGGET_CHAR_LIMIT),
        importance,
        source_doc_ids: vec![doc.doc_id.clone()],
        timestamp: doc.timestamp,
        uncited: false,
    }
}

/// The `k` most relevant distinct documents of the day, each as a nugget
/// whose importance is its relevance.
pub fn greedy_baseline(clusters: &[RankedCluster], k: usize) -> Result<Summary, NuggetError> {
    if k == 0 {
        return Err(NuggetError::InvalidCutoff(k));
    }
    let (event_id, request_id) = day_of(clusters);
    let mut nuggets: Vec<EventNugget> =
        pool_documents(clusters).iter().take(k).map(|d| doc_nugget(d, &event_id, &request_id, d.relevance)).collect();
    assign_ids(&mut nuggets);
    Ok(Summary { event_id, request_id, nuggets, cutoff_k: k })
}

/// Greedy maximal marginal relevance.
///
/// Picks, `k` times, the unselected index maximizing
/// `lambda * relevance[i] - (1 - lambda) * max_s sim(i, s)`. The first pick
/// is the most relevant item. Ties go to the lower index, so callers pass
/// items already in ranked order.
pub fn mmr_select<F>(relevance: &[f64], sim: F, lambda: f64, k: usize) -> Vec<usize>
where
    F: Fn(usize, usize) -> f64,
{
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1], got {lambda}");
    let n = relevance.len();
    let k = k.min(n);
    let mut selected = Vec::with_capacity(k);
    if k == 0 {
        return selected;
    }
    let mut taken = vec![false; n];
    let mut max_sim = vec![0.0f64; n];

    let first = (0..n).fold(0, |best, i| if relevance[i] > relevance[best] { i } else { best });
    let mut last = first;
    taken[first] = true;
    selected.push(first);

    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            max_sim[i] = max_sim[i].max(sim(i, last));
            let score = lambda * relevance[i] - (1.0 - lambda) * max_sim[i];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (i, _) = best.expect("k <= n leaves a candidate");
        taken[i] = true;
        selected.push(i);
        last = i;
    }
    selected
}

/// MMR over the pooled documents of the day with TF-IDF cosine.
///
/// Selection order is the summary order; importance is `1 - rank / k` so
/// that it is strictly decreasing along the selection.
pub fn mmr_baseline(
    clusters: &[RankedCluster],
    space: &TfIdfSpace,
    lambda: f64,
    k: usize,
) -> Result<Summary, NuggetError> {
    if k == 0 {
        return Err(NuggetError::InvalidCutoff(k));
    }
    let (event_id, request_id) = day_of(clusters);
    let pool = pool_documents(clusters);
    let vectors: Vec<SparseVec> = pool.iter().map(|d| space.vector(&d.text)).collect();
    let rel: Vec<f64> = pool.iter().map(|d| d.relevance).collect();
    let picks = mmr_select(&rel, |a, b| cosine(&vectors[a], &vectors[b]), lambda, k);
    let n = picks.len();
    let mut nuggets: Vec<EventNugget> = picks
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let importance = order::quantize6(1.0 - rank as f64 / n as f64);
            doc_nugget(&pool[i], &event_id, &request_id, importance)
        })
        .collect();
    assign_ids(&mut nuggets);
    Ok(Summary { event_id, request_id, nuggets, cutoff_k: k })
}
