//! Comprehensiveness and redundancy of summaries against graded meta-facts.

mod similarity;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::parse_lines;
use crate::nuggets::Summary;

pub use similarity::{token_f1, CachedSimilarity, RemoteSimilarity, SimilarityError, SimilarityScorer, TokenF1};

/// Default similarity a nugget/meta-fact pair needs to be matched.
pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    #[serde(alias = "useful", alias = "USEFUL")]
    Useful,
    #[serde(alias = "poor", alias = "POOR")]
    Poor,
    #[serde(alias = "redundant", alias = "REDUNDANT")]
    Redundant,
    #[serde(alias = "lagged", alias = "LAGGED")]
    Lagged,
}

impl Grade {
    pub fn score(self) -> f64 {
        match self {
            Self::Useful => 1.0,
            Self::Poor => 0.0,
            Self::Redundant => 0.5,
            Self::Lagged => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFact {
    #[serde(rename = "factID")]
    pub fact_id: String,
    #[serde(rename = "eventID")]
    pub event_id: String,
    #[serde(rename = "requestID")]
    pub request_id: String,
    #[serde(rename = "factText")]
    pub text: String,
    pub grade: Grade,
}

/// Reads a line-delimited meta-fact file. Any malformed line is an error.
pub fn load_meta_facts(path: &Path) -> io::Result<Vec<MetaFact>> {
    let loaded = parse_lines::<MetaFact, _>(BufReader::new(File::open(path)?))?;
    if let Some(e) = loaded.errors.first() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())));
    }
    Ok(loaded.records)
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("undefined denominator: no meta-fact with non-zero score")]
    UndefinedDenominator,
    #[error("threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("similarity for {event_id}/{request_id} failed: {source}")]
    Similarity {
        event_id: String,
        request_id: String,
        #[source]
        source: SimilarityError,
    },
    #[error("nothing to average")]
    Empty,
}

/// Edges `(nugget_id, fact_id)` between a summary and meta-facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchGraph {
    pub edges: BTreeSet<(String, String)>,
    pub similarity_threshold: f64,
    pub similarity_backend_id: String,
}

impl MatchGraph {
    pub fn new(threshold: f64, backend: impl Into<String>) -> Self {
        Self { edges: BTreeSet::new(), similarity_threshold: threshold, similarity_backend_id: backend.into() }
    }

    /// Meta-facts with at least one incident edge.
    pub fn adjacent_facts(&self) -> BTreeSet<&str> {
        self.edges.iter().map(|(_, f)| f.as_str()).collect()
    }
}

/// Scores every nugget against every meta-fact of the same request day and
/// links pairs whose similarity reaches `threshold`.
pub fn build_match_graph(
    summary: &Summary,
    meta: &[MetaFact],
    scorer: &dyn SimilarityScorer,
    threshold: f64,
) -> Result<MatchGraph, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::Threshold(threshold));
    }
    let mut graph = MatchGraph::new(threshold, scorer.name());
    let facts: Vec<&MetaFact> =
        meta.iter().filter(|f| f.event_id == summary.event_id && f.request_id == summary.request_id).collect();
    if facts.is_empty() || summary.nuggets.is_empty() {
        return Ok(graph);
    }
    let cands: Vec<&str> = summary.nuggets.iter().map(|n| n.text.as_str()).collect();
    let refs: Vec<&str> = facts.iter().map(|f| f.text.as_str()).collect();
    let m = scorer.matrix(&cands, &refs).map_err(|source| EvalError::Similarity {
        event_id: summary.event_id.clone(),
        request_id: summary.request_id.clone(),
        source,
    })?;
    for (n, row) in summary.nuggets.iter().zip(&m) {
        for (f, &s) in facts.iter().zip(row) {
            if s >= threshold {
                graph.edges.insert((n.nugget_id.clone(), f.fact_id.clone()));
            }
        }
    }
    Ok(graph)
}

/// Score mass of matched meta-facts over the score mass of all meta-facts
/// with a non-zero score. Each meta-fact counts once.
pub fn comprehensiveness(graph: &MatchGraph, meta: &[MetaFact]) -> Result<f64, EvalError> {
    let adjacent = graph.adjacent_facts();
    let denom = meta.iter().filter(|f| f.grade.score() > 0.0).count();
    if denom == 0 {
        return Err(EvalError::UndefinedDenominator);
    }
    let num: f64 = meta.iter().filter(|f| adjacent.contains(f.fact_id.as_str())).map(|f| f.grade.score()).sum();
    Ok(num / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Redundancy {
    pub value: f64,
    /// No meta-fact was matched; `value` is then 0.
    pub empty_adjacency: bool,
}

/// Mean score of the matched meta-facts.
pub fn redundancy(graph: &MatchGraph, meta: &[MetaFact]) -> Redundancy {
    let adjacent = graph.adjacent_facts();
    let scores: Vec<f64> =
        meta.iter().filter(|f| adjacent.contains(f.fact_id.as_str())).map(|f| f.grade.score()).collect();
    if scores.is_empty() {
        return Redundancy { value: 0.0, empty_adjacency: true };
    }
    Redundancy { value: scores.iter().sum::<f64>() / scores.len() as f64, empty_adjacency: false }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub per_event: BTreeMap<String, f64>,
    pub overall: f64,
}

/// Means within each event, then the unweighted mean of event means.
pub fn macro_average(per_request: &BTreeMap<(String, String), f64>) -> Result<MacroAverage, EvalError> {
    if per_request.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((event, _), v) in per_request {
        groups.entry(event.clone()).or_default().push(*v);
    }
    let per_event: BTreeMap<String, f64> =
        groups.into_iter().map(|(e, vs)| (e, vs.iter().sum::<f64>() / vs.len() as f64)).collect();
    let overall = per_event.values().sum::<f64>() / per_event.len() as f64;
    Ok(MacroAverage { per_event, overall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetrics {
    #[serde(rename = "eventID")]
    pub event_id: String,
    #[serde(rename = "requestID")]
    pub request_id: String,
    pub comprehensiveness: f64,
    pub redundancy: f64,
    #[serde(rename = "redundancyUndefined")]
    pub redundancy_undefined: bool,
    pub nuggets: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub similarity_backend: String,
    pub similarity_threshold: f64,
    pub cutoff_k: usize,
    pub per_request: Vec<RequestMetrics>,
    pub comprehensiveness: MacroAverage,
    pub redundancy: MacroAverage,
}

impl MetricReport {
    /// Aggregates per-request rows. Flagged redundancy values enter the mean
    /// as 0.
    pub fn from_rows(
        rows: Vec<RequestMetrics>,
        backend: &str,
        threshold: f64,
        cutoff_k: usize,
    ) -> Result<Self, EvalError> {
        let key = |r: &RequestMetrics| (r.event_id.clone(), r.request_id.clone());
        let comp: BTreeMap<_, _> = rows.iter().map(|r| (key(r), r.comprehensiveness)).collect();
        let red: BTreeMap<_, _> = rows.iter().map(|r| (key(r), r.redundancy)).collect();
        Ok(Self {
            similarity_backend: backend.to_string(),
            similarity_threshold: threshold,
            cutoff_k,
            comprehensiveness: macro_average(&comp)?,
            redundancy: macro_average(&red)?,
            per_request: rows,
        })
    }

    /// Events as columns plus an `Avg` column, values as percentages.
    pub fn table(&self) -> String {
        let events: Vec<&String> = self.comprehensiveness.per_event.keys().collect();
        let mut s = format!("{:<18}", "Metric");
        for e in &events {
            let _ = write!(s, " {e:>10}");
        }
        s.push_str(&format!(" {:>8}\n", "Avg"));
        for (label, avg) in [("Comprehensiveness", &self.comprehensiveness), ("Redundancy", &self.redundancy)] {
            let _ = write!(s, "{label:<18}");
            for e in &events {
                let _ = write!(s, " {:>10.2}", avg.per_event.get(*e).copied().unwrap_or(0.0) * 100.0);
            }
            let _ = writeln!(s, " {:>8.2}", avg.overall * 100.0);
        }
        s
    }
}

/// Evaluates one summary against the meta-facts of its request day.
pub fn evaluate_summary(
    summary: &Summary,
    meta: &[MetaFact],
    scorer: &dyn SimilarityScorer,
    threshold: f64,
) -> Result<RequestMetrics, EvalError> {
    let day: Vec<MetaFact> =
        meta.iter().filter(|f| f.event_id == summary.event_id && f.request_id == summary.request_id).cloned().collect();
    let graph = build_match_graph(summary, &day, scorer, threshold)?;
    let red = redundancy(&graph, &day);
    if red.empty_adjacency {
        log::warn!("{}/{}: no matched meta-facts, redundancy set to 0", summary.event_id, summary.request_id);
    }
    Ok(RequestMetrics {
        event_id: summary.event_id.clone(),
        request_id: summary.request_id.clone(),
        comprehensiveness: comprehensiveness(&graph, &day)?,
        redundancy: red.value,
        redundancy_undefined: red.empty_adjacency,
        nuggets: summary.nuggets.len(),
        edges: graph.edges.len(),
    })
}
