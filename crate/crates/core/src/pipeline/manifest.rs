//! Run manifest: per-triple status, cache counters and stage timings.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestReport;
use crate::cache::DiskCache;
use crate::config::RunConfig;
use crate::index::QueryContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripleStatus {
    Ok,
    Failed,
    SkippedEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    #[serde(rename = "eventID")]
    pub event_id: String,
    #[serde(rename = "requestID")]
    pub request_id: String,
    #[serde(rename = "queryID")]
    pub query_id: String,
    pub status: TripleStatus,
    pub candidates: usize,
    pub cluster_size: usize,
    pub facts: usize,
    pub nuggets: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TripleRecord {
    pub fn new(q: &QueryContext, candidates: usize) -> Self {
        Self {
            event_id: q.event_id.clone(),
            request_id: q.request_id.clone(),
            query_id: q.query_id.clone(),
            status: TripleStatus::Ok,
            candidates,
            cluster_size: 0,
            facts: 0,
            nuggets: 0,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheCounts {
    pub hits: u64,
    pub misses: u64,
}

impl CacheCounts {
    pub fn of(cache: &DiskCache) -> Self {
        Self { hits: cache.hits(), misses: cache.misses() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub strategy: String,
    pub rerank_backend: String,
    pub llm_backend: Option<String>,
    pub config: RunConfig,
    pub ingest: IngestReport,
    pub triples: Vec<TripleRecord>,
    /// Keyed by cache namespace; only caches that were in use.
    pub cache: BTreeMap<String, CacheCounts>,
    pub stage_ms: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn failures(&self) -> usize {
        self.triples.iter().filter(|t| t.status == TripleStatus::Failed).count()
    }

    pub fn count(&self, status: TripleStatus) -> usize {
        self.triples.iter().filter(|t| t.status == status).count()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
    }
}
