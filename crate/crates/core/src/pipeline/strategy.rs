//! Summary strategies: how one request day's clusters become a summary.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::formats::FactsRecord;
use crate::config::RunConfig;
use crate::factextract::{extract_facts, AuditRecord, LlmClient, PromptTemplate};
use crate::index::InvertedIndex;
use crate::nuggets::{
    assemble_request_nuggets, facts_to_nuggets, greedy_baseline, mmr_baseline, select_summary, Summary, UncitedFallback,
};
use crate::rerank::{RankedCluster, TfIdfSpace};

/// One request day's reranked clusters, in query order. Empty clusters are
/// already removed.
pub struct DayInput<'a> {
    pub event_id: &'a str,
    pub request_id: &'a str,
    pub clusters: &'a [RankedCluster],
    pub index: Option<&'a Arc<InvertedIndex>>,
}

/// Shared resources for strategies.
pub struct StrategyEnv<'a> {
    pub config: &'a RunConfig,
    pub llm: Option<&'a dyn LlmClient>,
    pub template: &'a PromptTemplate,
    pub demonstration: &'a str,
}

/// Per-query bookkeeping for the manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryOutcome {
    pub facts: usize,
    pub nuggets: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayResult {
    pub summary: Summary,
    pub per_query: BTreeMap<String, QueryOutcome>,
    pub facts: Vec<FactsRecord>,
    pub audit: Vec<AuditRecord>,
}

pub trait SummaryStrategy: Send + Sync {
    fn name(&self) -> &str;

    /// Cluster size the strategy reranks to.
    fn k2_cut(&self, config: &RunConfig) -> usize;

    fn uses_generation(&self) -> bool {
        false
    }

    fn summarize_day(&self, day: &DayInput<'_>, env: &StrategyEnv<'_>) -> Result<DayResult, String>;
}

/// Results of extracting facts from each cluster, in cluster order.
pub struct ExtractOutcome {
    pub record: Option<FactsRecord>,
    pub audit: AuditRecord,
    pub error: Option<String>,
}

/// Runs extraction over clusters in parallel; order is kept.
pub fn extract_clusters(
    clusters: &[RankedCluster],
    llm: &dyn LlmClient,
    template: &PromptTemplate,
    demonstration: &str,
) -> Vec<ExtractOutcome> {
    clusters
        .par_iter()
        .map(|c| match extract_facts(c, llm, demonstration, template) {
            Ok(ex) => ExtractOutcome {
                record: Some(FactsRecord {
                    query: c.query.clone(),
                    min_relevance: c.min_relevance().unwrap_or(0.0),
                    earliest_timestamp: c.earliest_timestamp().unwrap_or(0),
                    facts: ex.facts,
                }),
                audit: ex.audit,
                error: None,
            },
            Err(e) => {
                log::error!("{e}");
                ExtractOutcome { record: None, error: Some(e.to_string()), audit: e.audit }
            }
        })
        .collect()
}

/// Packs each triple's facts into nuggets and selects the day's summary.
pub fn summarize_facts(
    event_id: &str,
    request_id: &str,
    records: &[FactsRecord],
    config: &RunConfig,
) -> Result<(Summary, BTreeMap<String, usize>), String> {
    let mut per_query = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for r in records {
        let fallback = UncitedFallback { importance: r.min_relevance, timestamp: r.earliest_timestamp };
        let ns = facts_to_nuggets(&r.facts, &r.query, fallback, config.nuggets.char_limit);
        counts.insert(r.query.query_id.clone(), ns.len());
        per_query.insert(r.query.query_id.clone(), ns);
    }
    let pool = assemble_request_nuggets(&per_query);
    let mut summary = select_summary(&pool, config.nuggets.cutoff_automatic).map_err(|e| e.to_string())?;
    summary.event_id = event_id.to_string();
    summary.request_id = request_id.to_string();
    Ok((summary, counts))
}

/// Fact extraction with an instruction-following model, then nugget packing.
pub struct LlamaNuggets;

impl LlamaNuggets {
    pub const NAME: &'static str = "llama-nuggets";
}

impl SummaryStrategy for LlamaNuggets {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn k2_cut(&self, config: &RunConfig) -> usize {
        config.rerank.k2_cut_llm
    }

    fn uses_generation(&self) -> bool {
        true
    }

    fn summarize_day(&self, day: &DayInput<'_>, env: &StrategyEnv<'_>) -> Result<DayResult, String> {
        let llm = env.llm.ok_or("llama-nuggets needs a generator")?;
        let outcomes = extract_clusters(day.clusters, llm, env.template, env.demonstration);
        let mut per_query = BTreeMap::new();
        let mut facts = Vec::new();
        let mut audit = Vec::new();
        for o in outcomes {
            let qid = o.audit.query_id.clone();
            let mut q = QueryOutcome { error: o.error, ..Default::default() };
            if let Some(r) = o.record {
                q.facts = r.facts.len();
                facts.push(r);
            }
            per_query.insert(qid, q);
            audit.push(o.audit);
        }
        let (summary, counts) = summarize_facts(day.event_id, day.request_id, &facts, env.config)?;
        for (qid, n) in counts {
            per_query.entry(qid).or_default().nuggets = n;
        }
        Ok(DayResult { summary, per_query, facts, audit })
    }
}

fn baseline_outcomes(day: &DayInput<'_>, summary: &Summary) -> BTreeMap<String, QueryOutcome> {
    let mut per_query: BTreeMap<String, QueryOutcome> =
        day.clusters.iter().map(|c| (c.query.query_id.clone(), QueryOutcome::default())).collect();
    for n in &summary.nuggets {
        if let Some(q) = per_query.get_mut(&n.query_id) {
            q.nuggets += 1;
        }
    }
    per_query
}

/// Top-k documents by relevance.
pub struct GreedyStrategy;

impl GreedyStrategy {
    pub const NAME: &'static str = "greedy";
}

impl SummaryStrategy for GreedyStrategy {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn k2_cut(&self, config: &RunConfig) -> usize {
        config.rerank.k2_cut_baseline
    }

    fn summarize_day(&self, day: &DayInput<'_>, env: &StrategyEnv<'_>) -> Result<DayResult, String> {
        let mut summary =
            greedy_baseline(day.clusters, env.config.nuggets.cutoff_automatic).map_err(|e| e.to_string())?;
        summary.event_id = day.event_id.to_string();
        summary.request_id = day.request_id.to_string();
        let per_query = baseline_outcomes(day, &summary);
        Ok(DayResult { summary, per_query, facts: Vec::new(), audit: Vec::new() })
    }
}

/// Maximal marginal relevance over TF-IDF cosine.
pub struct MmrStrategy {
    pub lambda: f64,
}

impl MmrStrategy {
    pub const NAME: &'static str = "mmr";
}

impl SummaryStrategy for MmrStrategy {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn k2_cut(&self, config: &RunConfig) -> usize {
        config.rerank.k2_cut_baseline
    }

    fn summarize_day(&self, day: &DayInput<'_>, env: &StrategyEnv<'_>) -> Result<DayResult, String> {
        let k = env.config.nuggets.cutoff_automatic;
        let mut summary = match day.index {
            Some(index) => mmr_baseline(day.clusters, &TfIdfSpace::new(Arc::clone(index)), self.lambda, k),
            None => select_summary(&[], k),
        }
        .map_err(|e| e.to_string())?;
        summary.event_id = day.event_id.to_string();
        summary.request_id = day.request_id.to_string();
        let per_query = baseline_outcomes(day, &summary);
        Ok(DayResult { summary, per_query, facts: Vec::new(), audit: Vec::new() })
    }
}
