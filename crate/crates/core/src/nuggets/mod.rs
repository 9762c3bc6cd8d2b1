//! Event nuggets: packing facts into short statements, ranking them into
//! per-day summaries, and the document-level baselines.

mod baseline;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factextract::{ExtractedFact, FactFlag};
use crate::index::QueryContext;
use crate::order::quantize6;

pub use baseline::{greedy_baseline, mmr_baseline, mmr_select, pool_documents, PooledDoc};

/// Maximum nugget length in Unicode scalar values.
pub const NUGGET_CHAR_LIMIT: usize = 200;

/// Separator between packed facts; counted against the limit.
pub const FACT_SEPARATOR: &str = "; ";

/// Summary cut-off for automatic (reference-summary) evaluation.
pub const AUTOMATIC_CUTOFF: usize = 32;

/// Summary cut-off for assessor-style evaluation.
pub const HUMAN_CUTOFF: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum NuggetError {
    #[error("summary cut-off must be positive, got {0}")]
    InvalidCutoff(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventNugget {
    /// Assigned by [`assemble_request_nuggets`]; empty before that.
    pub nugget_id: String,
    pub event_id: String,
    pub request_id: String,
    pub query_id: String,
    pub text: String,
    pub importance: f64,
    pub source_doc_ids: Vec<String>,
    pub timestamp: i64,
    /// Every contributing fact lacked a usable citation.
    #[serde(default)]
    pub uncited: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub event_id: String,
    pub request_id: String,
    pub nuggets: Vec<EventNugget>,
    pub cutoff_k: usize,
}

/// Values used for nuggets none of whose facts resolved a citation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncitedFallback {
    /// Lowest relevance in the source cluster.
    pub importance: f64,
    /// Earliest timestamp in the source cluster.
    pub timestamp: i64,
}

/// Cuts `text` to at most `limit` characters at the last word boundary.
/// Text with no whitespace inside the limit is cut hard.
pub fn truncate_at_word(text: &str, limit: usize) -> String {
    if text.chars().count() <= limit {
        return text.to_string();
    }
    let head: String = text.chars().take(limit).collect();
    let next_is_space = text.chars().nth(limit).is_some_and(char::is_whitespace);
    if next_is_space {
        return head.trim_end().to_string();
    }
    match head.rfind(char::is_whitespace) {
        Some(i) if !head[..i].trim_end().is_empty() => head[..i].trim_end().to_string(),
        _ => head,
    }
}

#[derive(Default)]
struct Pending {
    text: String,
    chars: usize,
    relevances: Vec<f64>,
    sources: Vec<String>,
    timestamps: Vec<i64>,
}

impl Pending {
    fn push_fact(&mut self, text: &str, chars: usize, fact: &ExtractedFact) {
        if !self.text.is_empty() {
            self.text.push_str(FACT_SEPARATOR);
            self.chars += FACT_SEPARATOR.chars().count();
        }
        self.text.push_str(text);
        self.chars += chars;
        self.relevances.extend(&fact.relevances);
        self.timestamps.extend(&fact.timestamps);
        for id in &fact.resolved_doc_ids {
            if !self.sources.contains(id) {
                self.sources.push(id.clone());
            }
        }
    }

    fn finish(self, query: &QueryContext, fallback: UncitedFallback) -> EventNugget {
        let uncited = self.relevances.is_empty();
        let importance = if uncited {
            fallback.importance
        } else {
            quantize6(self.relevances.iter().sum::<f64>() / self.relevances.len() as f64)
        };
        EventNugget {
            nugget_id: String::new(),
            event_id: query.event_id.clone(),
            request_id: query.request_id.clone(),
            query_id: query.query_id.clone(),
            text: self.text,
            importance,
            source_doc_ids: self.sources,
            timestamp: self.timestamps.into_iter().min().unwrap_or(fallback.timestamp),
            uncited,
        }
    }
}

/// Greedily packs facts, in order, into nuggets of at most `limit`
/// characters joined by `"; "`.
///
/// A nugget's importance is the mean over every citation relevance of its
/// facts (a document cited twice counts twice), rounded to six decimals.
/// Facts with invalid citations contribute text but no relevance.
pub fn facts_to_nuggets(
    facts: &[ExtractedFact],
    query: &QueryContext,
    fallback: UncitedFallback,
    limit: usize,
) -> Vec<EventNugget> {
    let sep = FACT_SEPARATOR.chars().count();
    let mut out = Vec::new();
    let mut cur = Pending::default();
    for fact in facts {
        let text = truncate_at_word(&fact.text, limit);
        let chars = text.chars().count();
        if chars == 0 {
            continue;
        }
        if !cur.text.is_empty() && cur.chars + sep + chars > limit {
            out.push(std::mem::take(&mut cur).finish(query, fallback));
        }
        cur.push_fact(&text, chars, fact);
    }
    if !cur.text.is_empty() {
        out.push(cur.finish(query, fallback));
    }
    debug_assert!(out.iter().all(|n| n.text.chars().count() <= limit));
    out
}

fn sort_nuggets(nuggets: &mut [EventNugget]) {
    nuggets.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.timestamp.cmp(&b.timestamp)));
}

/// Assigns `eventID-requestID-N` ids (1-based) in pool order.
pub fn assign_ids(nuggets: &mut [EventNugget]) {
    for (i, n) in nuggets.iter_mut().enumerate() {
        n.nugget_id = format!("{}-{}-{}", n.event_id, n.request_id, i + 1);
    }
}

/// Pools one day's per-query nuggets into a single ranked list.
///
/// Order is importance descending, then timestamp ascending; remaining ties
/// keep query-id order and packing order.
pub fn assemble_request_nuggets(per_query: &BTreeMap<String, Vec<EventNugget>>) -> Vec<EventNugget> {
    let mut pool: Vec<EventNugget> = per_query.values().flatten().cloned().collect();
    sort_nuggets(&mut pool);
    assign_ids(&mut pool);
    pool
}

/// The first `k` nuggets of a sorted pool.
pub fn select_summary(pool: &[EventNugget], k: usize) -> Result<Summary, NuggetError> {
    if k == 0 {
        return Err(NuggetError::InvalidCutoff(k));
    }
    let first = pool.first();
    Ok(Summary {
        event_id: first.map(|n| n.event_id.clone()).unwrap_or_default(),
        request_id: first.map(|n| n.request_id.clone()).unwrap_or_default(),
        nuggets: pool.iter().take(k).cloned().collect(),
        cutoff_k: k,
    })
}

/// True when any fact in a nugget's source list came from a bad citation.
pub fn has_citation_issues(facts: &[ExtractedFact]) -> bool {
    facts.iter().any(|f| f.flags.contains(&FactFlag::NoCitation) || f.flags.contains(&FactFlag::OutOfRangeCitation))
}
