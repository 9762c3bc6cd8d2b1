//! Bo1 (Bose-Einstein) divergence-from-randomness query expansion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{InvertedIndex, ScoredDoc, WeightedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bo1Params {
    /// Top-ranked documents used as pseudo-relevant feedback.
    pub feedback_docs: usize,
    /// Number of new terms added to the query.
    pub expansion_terms: usize,
}

impl Default for Bo1Params {
    fn default() -> Self {
        Self { feedback_docs: 20, expansion_terms: 3 }
    }
}

/// `tf_x * log2((1 + Pn) / Pn) + log2(1 + Pn)` with `Pn = collection_tf / N`.
pub fn bo1_weight(feedback_tf: f64, collection_tf: f64, num_docs: f64) -> f64 {
    let pn = collection_tf / num_docs;
    feedback_tf * ((1.0 + pn) / pn).log2() + (1.0 + pn).log2()
}

/// Reformulates `original` using the top of `seed`.
///
/// Original terms keep weight 1 per occurrence and gain `w(t) / max_w` when
/// they occur in the feedback set. The `expansion_terms` best new terms are
/// added with weight `w(t) / max_w`; equal weights are broken by term order.
/// With no feedback documents or `expansion_terms == 0` the original query
/// comes back unchanged.
pub fn bo1_expand<S: AsRef<str>>(
    index: &InvertedIndex,
    original: &[S],
    seed: &[ScoredDoc],
    params: Bo1Params,
) -> WeightedQuery {
    let mut query = WeightedQuery::from_terms(original);
    let feedback = &seed[..seed.len().min(params.feedback_docs)];
    if feedback.is_empty() || params.expansion_terms == 0 {
        return query;
    }

    let mut feedback_tf: BTreeMap<&str, u64> = BTreeMap::new();
    for scored in feedback {
        if let Some(doc) = index.doc(&scored.doc_id) {
            for (term, tf) in &doc.terms {
                *feedback_tf.entry(term.as_str()).or_default() += u64::from(*tf);
            }
        }
    }
    if feedback_tf.is_empty() {
        return query;
    }

    let n = index.num_docs() as f64;
    let weights: Vec<(&str, f64)> =
        feedback_tf.iter().map(|(&t, &tf)| (t, bo1_weight(tf as f64, index.collection_tf(t) as f64, n))).collect();
    let max_w = weights.iter().map(|&(_, w)| w).fold(f64::NEG_INFINITY, f64::max);

    let originals: BTreeSet<&str> = original.iter().map(AsRef::as_ref).collect();
    for &(t, w) in weights.iter().filter(|(t, _)| originals.contains(t)) {
        query.add(t, w / max_w);
    }

    let mut candidates: Vec<(&str, f64)> = weights.into_iter().filter(|(t, _)| !originals.contains(t)).collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (t, w) in candidates.into_iter().take(params.expansion_terms) {
        query.add(t, w / max_w);
    }
    query
}
