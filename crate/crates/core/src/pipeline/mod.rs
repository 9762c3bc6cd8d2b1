//! End-to-end orchestration over (event, request-day, query) triples.

mod formats;
mod manifest;
mod strategy;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cache::{content_hash_parts, DiskCache};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{
    check_request_windows, deduplicate, load_request_days, load_stream_items, normalize_items, partition_by_day,
    DayKey, NormalizeRules, RequestDay, SourceType, StreamItem,
};
use crate::eval::{evaluate_summary, load_meta_facts, CachedSimilarity, EvalError, MetricReport, SimilarityScorer};
use crate::factextract::{AuditRecord, CachedLlm, LlmClient, PromptTemplate, TemplateError, DEFAULT_DEMONSTRATION};
use crate::index::{load_cached_index, retrieve, save_cached_index, InvertedIndex, RetrieveParams};
use crate::nuggets::Summary;
use crate::registry::{BackendEnv, Registries, RegistryError};
use crate::rerank::{rerank, CachedScorer, RankedCluster, RerankBackend, RerankScorer};

pub use formats::{
    read_jsonl, submission_records, summaries_from_submission, write_jsonl, FactsRecord, QueryRecord, RetrievedRecord,
    SubmissionRecord,
};
pub use manifest::{CacheCounts, RunManifest, TripleRecord, TripleStatus};
pub use strategy::{
    extract_clusters, summarize_facts, DayInput, DayResult, ExtractOutcome, GreedyStrategy, LlamaNuggets, MmrStrategy,
    QueryOutcome, StrategyEnv, SummaryStrategy,
};

pub const ITEMS_FILE: &str = "items.jsonl";
pub const RETRIEVED_FILE: &str = "retrieved.jsonl";
pub const CLUSTERS_FILE: &str = "clusters.jsonl";
pub const FACTS_FILE: &str = "facts.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const SUBMISSION_FILE: &str = "submission.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Problems with the configuration or its inputs, as opposed to failures
    /// while processing.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Registry(_) | Self::Template(_) | Self::Input(_))
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

/// Counts from loading and cleaning the stream items.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub loaded: usize,
    pub malformed_lines: usize,
    pub window_violations: usize,
    pub duplicates: usize,
    pub kept: usize,
}

/// Loads, filters, normalizes, window-checks and deduplicates the stream
/// items.
pub fn ingest(config: &RunConfig) -> Result<(Vec<StreamItem>, IngestReport), PipelineError> {
    let days = load_days(config)?;
    let sources: Vec<SourceType> = config.inputs.sources.iter().filter_map(|s| s.parse().ok()).collect();
    let filter = (!sources.is_empty()).then_some(sources.as_slice());
    let mut report = IngestReport::default();
    let mut items = Vec::new();
    for path in &config.inputs.stream_items {
        let loaded = load_stream_items(path, filter).map_err(io_err(path.display().to_string()))?;
        for e in &loaded.errors {
            log::warn!("{}: {e}", path.display());
        }
        report.malformed_lines += loaded.errors.len();
        items.extend(loaded.records);
    }
    report.loaded = items.len() + report.malformed_lines;
    normalize_items(&mut items, &NormalizeRules::default());
    let (items, violations) = check_request_windows(items, &days);
    for v in &violations {
        log::warn!("dropping {v}");
    }
    report.window_violations = violations.len();
    let before = items.len();
    let items = deduplicate(items);
    report.duplicates = before - items.len();
    report.kept = items.len();
    Ok((items, report))
}

pub fn load_days(config: &RunConfig) -> Result<Vec<RequestDay>, PipelineError> {
    let path = &config.inputs.request_days;
    let loaded = load_request_days(path).map_err(io_err(path.display().to_string()))?;
    if let Some(e) = loaded.errors.first() {
        return Err(PipelineError::Input(format!("{}: {e}", path.display())));
    }
    let mut days = loaded.records;
    days.sort_by(|a, b| (&a.event_id, &a.request_id).cmp(&(&b.event_id, &b.request_id)));
    Ok(days)
}

pub fn load_queries(config: &RunConfig) -> Result<Vec<QueryRecord>, PipelineError> {
    let path = &config.inputs.queries;
    let mut qs: Vec<QueryRecord> = read_jsonl(path).map_err(io_err(path.display().to_string()))?;
    if let Some(q) = qs.iter().find(|q| q.query_text.trim().is_empty()) {
        return Err(PipelineError::Input(format!("query `{}` has empty text", q.query_id)));
    }
    qs.sort_by(|a, b| (&a.event_id, &a.query_id).cmp(&(&b.event_id, &b.query_id)));
    Ok(qs)
}

/// One request day's collection and its index (absent when empty).
pub struct DayData {
    pub day: RequestDay,
    pub items: Vec<StreamItem>,
    pub index: Option<Arc<InvertedIndex>>,
}

impl DayData {
    pub fn key(&self) -> DayKey {
        (self.day.event_id.clone(), self.day.request_id.clone())
    }

    pub fn item_map(&self) -> HashMap<&str, &StreamItem> {
        self.items.iter().map(|i| (i.doc_id.as_str(), i)).collect()
    }
}

fn index_cache_path(cache_dir: &Path, key: &DayKey) -> PathBuf {
    let name = content_hash_parts(&[&key.0, &key.1]);
    cache_dir.join("index").join(format!("{}.json", &name[..16]))
}

/// Builds (or loads from the cache) the index of every declared day.
pub fn build_days(
    days: &[RequestDay],
    items: Vec<StreamItem>,
    cache_dir: Option<&Path>,
) -> Result<Vec<DayData>, PipelineError> {
    let mut parts = partition_by_day(items);
    let pending: Vec<(RequestDay, Vec<StreamItem>)> = days
        .iter()
        .map(|d| (d.clone(), parts.remove(&(d.event_id.clone(), d.request_id.clone())).unwrap_or_default()))
        .collect();
    pending
        .into_par_iter()
        .map(|(day, items)| {
            if items.is_empty() {
                return Ok(DayData { day, items, index: None });
            }
            let key = (day.event_id.clone(), day.request_id.clone());
            let cached = cache_dir.and_then(|dir| load_cached_index(&index_cache_path(dir, &key), &items));
            let index = match cached {
                Some(ix) => ix,
                None => {
                    let ix = InvertedIndex::build(&items)
                        .map_err(|e| PipelineError::Input(format!("{}/{}: {e}", key.0, key.1)))?;
                    if let Some(dir) = cache_dir {
                        let path = index_cache_path(dir, &key);
                        if let Err(e) = save_cached_index(&path, &items, &ix) {
                            log::warn!("index cache write {} failed: {e}", path.display());
                        }
                    }
                    ix
                }
            };
            Ok(DayData { day, items, index: Some(Arc::new(index)) })
        })
        .collect()
}

/// Every (query, day) pair of the same event, in (event, request, query)
/// order.
pub fn triples<'a>(days: &'a [DayData], queries: &'a [QueryRecord]) -> Vec<(usize, &'a QueryRecord)> {
    let mut out = Vec::new();
    for (i, d) in days.iter().enumerate() {
        for q in queries.iter().filter(|q| q.event_id == d.day.event_id) {
            out.push((i, q));
        }
    }
    out
}

pub fn retrieve_all(days: &[DayData], queries: &[QueryRecord], params: &RetrieveParams) -> Vec<RetrievedRecord> {
    triples(days, queries)
        .into_par_iter()
        .map(|(i, q)| {
            let query = q.for_day(&days[i].day.request_id);
            let candidates = match &days[i].index {
                Some(ix) => retrieve(ix, &query, params),
                None => Vec::new(),
            };
            RetrievedRecord { query, candidates }
        })
        .collect()
}

/// Reranks every non-empty candidate list. Returns, per input record,
/// `None` for empty input, or the cluster / error message.
pub fn rerank_all(
    days: &[DayData],
    retrieved: &[RetrievedRecord],
    backend: &dyn RerankBackend,
    cache: Option<&Arc<DiskCache>>,
    cutoff: usize,
) -> Vec<Option<Result<RankedCluster, String>>> {
    let by_key: HashMap<DayKey, usize> = days.iter().enumerate().map(|(i, d)| (d.key(), i)).collect();
    let scorers: Vec<Option<Arc<dyn RerankScorer>>> = days
        .iter()
        .map(|d| {
            d.index.as_ref().map(|ix| {
                let s = backend.for_day(ix);
                match cache {
                    Some(c) if backend.cacheable() => {
                        Arc::new(CachedScorer::new(s, Arc::clone(c))) as Arc<dyn RerankScorer>
                    }
                    _ => s,
                }
            })
        })
        .collect();
    let maps: Vec<HashMap<&str, &StreamItem>> = days.iter().map(DayData::item_map).collect();
    retrieved
        .par_iter()
        .map(|r| {
            if r.candidates.is_empty() {
                return None;
            }
            let key = (r.query.event_id.clone(), r.query.request_id.clone());
            let Some(&i) = by_key.get(&key) else {
                return Some(Err(format!("no collection for {}/{}", key.0, key.1)));
            };
            let Some(scorer) = &scorers[i] else {
                return Some(Err(format!("no index for {}/{}", key.0, key.1)));
            };
            Some(rerank(&r.candidates, &maps[i], &r.query, scorer.as_ref(), cutoff).map_err(|e| {
                log::error!("{}: {e}", r.query.query_id);
                e.to_string()
            }))
        })
        .collect()
}

/// Template and demonstration, from the configured files or the defaults.
pub fn load_prompt(config: &RunConfig) -> Result<(PromptTemplate, String), PipelineError> {
    let template = match &config.generation.template {
        Some(p) => PromptTemplate::from_file(p)?,
        None => PromptTemplate::default(),
    };
    let demonstration = match &config.generation.demonstration {
        Some(p) => fs::read_to_string(p).map_err(io_err(p.display().to_string()))?.trim_end().to_string(),
        None => DEFAULT_DEMONSTRATION.to_string(),
    };
    Ok((template, demonstration))
}

/// Builds the generator named in the config, wrapped in the disk cache when
/// worthwhile.
pub fn build_llm(
    registries: &Registries,
    env: &BackendEnv,
    cache: &Arc<DiskCache>,
) -> Result<Arc<dyn LlmClient>, PipelineError> {
    let llm = registries.llm.build(&env.config.generation.backend, env)?;
    Ok(if llm.cacheable() { Arc::new(CachedLlm::new(llm, Arc::clone(cache))) } else { llm })
}

pub fn build_similarity(
    registries: &Registries,
    env: &BackendEnv,
    cache: &Arc<DiskCache>,
) -> Result<Arc<dyn SimilarityScorer>, PipelineError> {
    let sim = registries.similarity.build(&env.config.eval.similarity_backend, env)?;
    Ok(if sim.cacheable() { Arc::new(CachedSimilarity::new(sim, Arc::clone(cache))) } else { sim })
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub items: Vec<StreamItem>,
    pub retrieved: Vec<RetrievedRecord>,
    pub clusters: Vec<RankedCluster>,
    pub facts: Vec<FactsRecord>,
    pub audit: Vec<AuditRecord>,
    pub summaries: Vec<Summary>,
    pub manifest: RunManifest,
}

impl RunOutput {
    pub fn submission(&self) -> Vec<SubmissionRecord> {
        submission_records(&self.manifest.run_id, &self.summaries)
    }

    /// Writes every intermediate and the manifest into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let ctx = |f: &str| dir.join(f).display().to_string();
        fs::create_dir_all(dir).map_err(io_err(dir.display().to_string()))?;
        write_jsonl(&dir.join(ITEMS_FILE), &self.items).map_err(io_err(ctx(ITEMS_FILE)))?;
        write_jsonl(&dir.join(RETRIEVED_FILE), &self.retrieved).map_err(io_err(ctx(RETRIEVED_FILE)))?;
        write_jsonl(&dir.join(CLUSTERS_FILE), &self.clusters).map_err(io_err(ctx(CLUSTERS_FILE)))?;
        if !self.audit.is_empty() {
            write_jsonl(&dir.join(FACTS_FILE), &self.facts).map_err(io_err(ctx(FACTS_FILE)))?;
            write_jsonl(&dir.join(AUDIT_FILE), &self.audit).map_err(io_err(ctx(AUDIT_FILE)))?;
        }
        write_jsonl(&dir.join(SUBMISSION_FILE), &self.submission()).map_err(io_err(ctx(SUBMISSION_FILE)))?;
        self.manifest.write(&dir.join(MANIFEST_FILE)).map_err(io_err(ctx(MANIFEST_FILE)))
    }
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

/// Runs every stage with the named summary strategy.
///
/// Per-triple failures are recorded in the manifest and do not stop the
/// run; errors returned here are configuration or input problems.
pub fn run_pipeline(
    config: &RunConfig,
    registries: &Registries,
    strategy_name: &str,
) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    config.check_inputs()?;
    let env = BackendEnv::new(config.clone());
    let strategy = registries.strategy.build(strategy_name, &env)?;
    let backend = registries.rerank.build(&config.rerank.backend, &env)?;
    let rerank_cache = Arc::new(DiskCache::new(&config.run.cache_dir));
    let gen_cache = Arc::new(DiskCache::new(&config.run.cache_dir));
    let llm = if strategy.uses_generation() { Some(build_llm(registries, &env, &gen_cache)?) } else { None };
    let (template, demonstration) = load_prompt(config)?;
    let queries = load_queries(config)?;
    let days = load_days(config)?;

    thread_pool(config.run.workers).install(|| {
        let mut stage_ms = BTreeMap::new();
        let mut clock = Instant::now();
        let mut lap = |name: &str, stage_ms: &mut BTreeMap<String, u64>| {
            stage_ms.insert(name.to_string(), clock.elapsed().as_millis() as u64);
            clock = Instant::now();
        };

        let (items, ingest_report) = ingest(config)?;
        lap("ingest", &mut stage_ms);
        let day_data = build_days(&days, items.clone(), Some(&config.run.cache_dir))?;
        lap("index", &mut stage_ms);
        let retrieved = retrieve_all(&day_data, &queries, &config.retrieval.params());
        lap("retrieve", &mut stage_ms);
        let reranked =
            rerank_all(&day_data, &retrieved, backend.as_ref(), Some(&rerank_cache), strategy.k2_cut(config));
        lap("rerank", &mut stage_ms);

        let mut triples: Vec<TripleRecord> = retrieved
            .iter()
            .zip(&reranked)
            .map(|(r, c)| {
                let mut t = TripleRecord::new(&r.query, r.candidates.len());
                match c {
                    None => t.status = TripleStatus::SkippedEmpty,
                    Some(Err(e)) => {
                        t.status = TripleStatus::Failed;
                        t.error = Some(e.clone());
                    }
                    Some(Ok(cl)) if cl.is_empty() => t.status = TripleStatus::SkippedEmpty,
                    Some(Ok(cl)) => t.cluster_size = cl.entries.len(),
                }
                t
            })
            .collect();
        let clusters: Vec<RankedCluster> =
            reranked.into_iter().filter_map(|c| c.and_then(Result::ok)).filter(|c| !c.is_empty()).collect();

        let senv = StrategyEnv { config, llm: llm.as_deref(), template: &template, demonstration: &demonstration };
        let mut summaries = Vec::new();
        let mut facts = Vec::new();
        let mut audit = Vec::new();
        for d in &day_data {
            let day_clusters: Vec<RankedCluster> = clusters
                .iter()
                .filter(|c| c.query.event_id == d.day.event_id && c.query.request_id == d.day.request_id)
                .cloned()
                .collect();
            let input = DayInput {
                event_id: &d.day.event_id,
                request_id: &d.day.request_id,
                clusters: &day_clusters,
                index: d.index.as_ref(),
            };
            let result = strategy
                .summarize_day(&input, &senv)
                .map_err(|e| PipelineError::Input(format!("{}/{}: {e}", d.day.event_id, d.day.request_id)))?;
            for t in triples.iter_mut().filter(|t| t.event_id == d.day.event_id && t.request_id == d.day.request_id) {
                if let Some(q) = result.per_query.get(&t.query_id) {
                    t.facts = q.facts;
                    t.nuggets = q.nuggets;
                    if let Some(e) = &q.error {
                        t.status = TripleStatus::Failed;
                        t.error = Some(e.clone());
                    }
                }
            }
            summaries.push(result.summary);
            facts.extend(result.facts);
            audit.extend(result.audit);
        }
        lap("summarize", &mut stage_ms);

        let mut cache = BTreeMap::new();
        if backend.cacheable() {
            cache.insert(CachedScorer::NAMESPACE.to_string(), CacheCounts::of(&rerank_cache));
        }
        if llm.as_ref().is_some_and(|l| l.cacheable()) {
            cache.insert(CachedLlm::NAMESPACE.to_string(), CacheCounts::of(&gen_cache));
        }
        let manifest = RunManifest {
            run_id: config.run_id.clone(),
            strategy: strategy.name().to_string(),
            rerank_backend: backend.name().to_string(),
            llm_backend: llm.as_ref().map(|l| l.name().to_string()),
            config: config.clone(),
            ingest: ingest_report,
            triples,
            cache,
            stage_ms,
        };
        Ok(RunOutput { items, retrieved, clusters, facts, audit, summaries, manifest })
    })
}

/// Scores a submission file against a meta-fact file.
///
/// The first `cutoff` lines of each request day are evaluated. Days with
/// meta-facts but no submitted nuggets count as empty summaries; submitted
/// days without meta-facts are an error.
pub fn run_eval(
    submission: &Path,
    meta_facts: &Path,
    scorer: &dyn SimilarityScorer,
    threshold: f64,
    cutoff: usize,
) -> Result<MetricReport, PipelineError> {
    if cutoff == 0 {
        return Err(PipelineError::Input("cutoff must be positive".into()));
    }
    let records: Vec<SubmissionRecord> = read_jsonl(submission).map_err(io_err(submission.display().to_string()))?;
    let meta = load_meta_facts(meta_facts).map_err(io_err(meta_facts.display().to_string()))?;
    let grouped = summaries_from_submission(&records);
    let meta_keys: BTreeSet<(String, String)> =
        meta.iter().map(|f| (f.event_id.clone(), f.request_id.clone())).collect();
    let unmatched: Vec<String> =
        grouped.keys().filter(|k| !meta_keys.contains(*k)).map(|(e, r)| format!("{e}/{r}")).collect();
    if !unmatched.is_empty() {
        return Err(PipelineError::Input(format!("no meta-facts for: {}", unmatched.join(", "))));
    }
    let mut rows = Vec::new();
    for (e, r) in &meta_keys {
        let nuggets = grouped.get(&(e.clone(), r.clone())).cloned().unwrap_or_default();
        let summary = Summary {
            event_id: e.clone(),
            request_id: r.clone(),
            nuggets: nuggets.into_iter().take(cutoff).collect(),
            cutoff_k: cutoff,
        };
        rows.push(evaluate_summary(&summary, &meta, scorer, threshold)?);
    }
    Ok(MetricReport::from_rows(rows, scorer.name(), threshold, cutoff)?)
}
