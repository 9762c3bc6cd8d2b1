//! Query-focused fact extraction with an instruction-following model.

mod client;
mod parse;
mod prompt;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::content_hash;
use crate::rerank::RankedCluster;

pub use client::{CachedLlm, LlmClient, LlmError, RemoteLlm, ReplayClient, ReplayRecord};
pub use parse::{parse_response, ExtractedFact, FactFlag, FormatFlag, ParseReport};
pub use prompt::{
    build_prompt, PromptSpec, PromptTemplate, TemplateError, DEFAULT_DEMONSTRATION, DEFAULT_TEMPLATE,
    INSTRUCTION_HEADER, RULES,
};

/// Maps ordinals to cluster entries (1-based) and copies their ids,
/// relevances and timestamps. Out-of-range ordinals are skipped.
pub fn resolve_citations(report: &ParseReport, cluster: &RankedCluster) -> Vec<ExtractedFact> {
    report
        .facts
        .iter()
        .map(|f| {
            let mut fact = f.clone();
            fact.resolved_doc_ids.clear();
            fact.relevances.clear();
            fact.timestamps.clear();
            for &o in &f.cited_ordinals {
                if let Some(entry) = o.checked_sub(1).and_then(|i| cluster.entries.get(i)) {
                    fact.resolved_doc_ids.push(entry.doc_id.clone());
                    fact.relevances.push(entry.relevance);
                    fact.timestamps.push(entry.timestamp);
                }
            }
            fact
        })
        .collect()
}

/// The prompt/response exchange for one triple, kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub query_id: String,
    pub event_id: String,
    pub request_id: String,
    pub prompt_hash: String,
    pub prompt: String,
    pub response: Option<String>,
    pub flags: BTreeSet<FormatFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub facts: Vec<ExtractedFact>,
    pub report: ParseReport,
    pub audit: AuditRecord,
}

#[derive(Debug, Error)]
#[error("generation for `{query_id}` failed: {source}")]
pub struct ExtractError {
    pub query_id: String,
    pub audit: AuditRecord,
    #[source]
    pub source: LlmError,
}

/// Prompt, complete, parse, resolve.
pub fn extract_facts(
    cluster: &RankedCluster,
    client: &dyn LlmClient,
    demonstration: &str,
    template: &PromptTemplate,
) -> Result<Extraction, Box<ExtractError>> {
    let (_, prompt) = build_prompt(cluster, demonstration, template);
    let mut audit = AuditRecord {
        query_id: cluster.query.query_id.clone(),
        event_id: cluster.query.event_id.clone(),
        request_id: cluster.query.request_id.clone(),
        prompt_hash: content_hash(&prompt),
        prompt,
        response: None,
        flags: BTreeSet::new(),
        error: None,
    };
    let response = match client.complete(&audit.prompt) {
        Ok(r) => r,
        Err(source) => {
            audit.error = Some(source.to_string());
            return Err(Box::new(ExtractError { query_id: audit.query_id.clone(), audit, source }));
        }
    };
    let report = parse_response(&response, cluster.entries.len());
    let facts = resolve_citations(&report, cluster);
    audit.flags = report.format_flags.clone();
    audit.response = Some(response);
    Ok(Extraction { facts, report, audit })
}
