//! Command-line driver. Each stage reads and writes line-delimited files in
//! the output directory, so stages can be run and inspected one at a time.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use crisis_nuggets::cache::DiskCache;
use crisis_nuggets::config::RunConfig;
use crisis_nuggets::pipeline::{
    self, build_days, build_llm, build_similarity, extract_clusters, ingest, load_days, load_prompt, load_queries,
    read_jsonl, rerank_all, retrieve_all, run_eval, run_pipeline, submission_records, summarize_facts, write_jsonl,
    DayInput, FactsRecord, PipelineError, RetrievedRecord, StrategyEnv, AUDIT_FILE, CLUSTERS_FILE, FACTS_FILE,
    ITEMS_FILE, RETRIEVED_FILE, SUBMISSION_FILE,
};
use crisis_nuggets::registry::{BackendEnv, Registries};
use crisis_nuggets::{RankedCluster, StreamItem, Summary};

#[derive(Parser)]
#[command(name = "crisis-nuggets", version, about = "Crisis event nugget summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; defaults to `run.output_dir` from the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Reranker backend override.
    #[arg(long)]
    reranker: Option<String>,
    /// Generator backend override.
    #[arg(long)]
    generator: Option<String>,
    /// Run id override.
    #[arg(long)]
    run_id: Option<String>,
    /// Cache directory override.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Greedy,
    Mmr,
}

#[derive(Subcommand)]
enum Command {
    /// Load, normalize and deduplicate stream items.
    Ingest(Common),
    /// Build (or refresh) the per-day index cache.
    Index(Common),
    /// First-stage retrieval for every triple.
    Retrieve(Common),
    /// Rerank retrieved candidates into clusters.
    Rerank {
        #[command(flatten)]
        common: Common,
        /// Cluster size; defaults to the cut of `--strategy`.
        #[arg(long)]
        k2: Option<usize>,
        #[arg(long, default_value = "llama-nuggets")]
        strategy: String,
    },
    /// Extract cited facts from every cluster.
    Extract(Common),
    /// Pack facts into nuggets and write the submission.
    Summarize(Common),
    /// Build a baseline submission from the clusters.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        which: Baseline,
        /// MMR trade-off override.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Score a submission against graded meta-facts.
    Evaluate {
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        meta_facts: PathBuf,
        /// Supplies the similarity backend, threshold and sidecar address.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long)]
        similarity: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Nuggets per request day that are scored.
        #[arg(long)]
        cutoff: Option<usize>,
        /// Also write the report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Every stage end to end.
    RunAll {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "llama-nuggets")]
        strategy: String,
    },
}

/// Exit status 1: the run finished but some triples failed.
struct Partial(usize);

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Run(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = Result<Option<Partial>, Failure>;

fn load_config(c: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = RunConfig::load(&c.config).map_err(|e| Failure::Config(e.into()))?;
    if let Some(r) = &c.reranker {
        cfg.rerank.backend = r.clone();
    }
    if let Some(g) = &c.generator {
        cfg.generation.backend = g.clone();
    }
    if let Some(id) = &c.run_id {
        cfg.run_id = id.clone();
    }
    if let Some(d) = &c.cache_dir {
        cfg.run.cache_dir = d.clone();
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    let out = c.out.clone().unwrap_or_else(|| cfg.run.output_dir.clone());
    Ok((cfg, out))
}

fn read<T: serde::de::DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<T>, Failure> {
    let path = dir.join(file);
    read_jsonl(&path)
        .with_context(|| format!("reading {} (run the earlier stage first)", path.display()))
        .map_err(Failure::Config)
}

fn write<T: serde::Serialize>(dir: &Path, file: &str, records: &[T]) -> Result<(), Failure> {
    let path = dir.join(file);
    write_jsonl(&path, records).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn partial(failures: usize) -> Option<Partial> {
    (failures > 0).then_some(Partial(failures))
}

fn cmd_ingest(c: &Common) -> Outcome {
    let (cfg, out) = load_config(c)?;
    let (items, report) = ingest(&cfg)?;
    eprintln!("{}", serde_json::to_string(&report).expect("report serializes"));
    write(&out, ITEMS_FILE, &items)?;
    Ok(None)
}

fn day_data(cfg: &RunConfig, out: &Path) -> Result<Vec<pipeline::DayData>, Failure> {
    let items: Vec<StreamItem> = read(out, ITEMS_FILE)?;
    Ok(build_days(&load_days(cfg)?, items, Some(&cfg.run.cache_dir))?)
}

fn cmd_index(c: &Common) -> Outcome {
    let (cfg, out) = load_config(c)?;
    for d in day_data(&cfg, &out)? {
        let terms = d.index.as_ref().map_or(0, |ix| ix.vocabulary().count());
        println!("{}\t{}\t{} docs\t{} terms", d.day.event_id, d.day.request_id, d.items.len(), terms);
    }
    Ok(None)
}

fn cmd_retrieve(c: &Common) -> Outcome {
    let (cfg, out) = load_config(c)?;
    let days = day_data(&cfg, &out)?;
    let retrieved = retrieve_all(&days, &load_queries(&cfg)?, &cfg.retrieval.params());
    write(&out, RETRIEVED_FILE, &retrieved)?;
    Ok(None)
}

fn cmd_rerank(c: &Common, k2: Option<usize>, strategy: &str) -> Outcome {
    let (cfg, out) = load_config(c)?;
    let registries = Registries::default();
    let env = BackendEnv::new(cfg.clone());
    let cutoff = match k2 {
        Some(k) => k,
        None => registries.strategy.build(strategy, &env).map_err(PipelineError::from)?.k2_cut(&cfg),
    };
    let backend = registries.rerank.build(&cfg.rerank.backend, &env).map_err(PipelineError::from)?;
    let days = day_data(&cfg, &out)?;
    let retrieved: Vec<RetrievedRecord> = read(&out, RETRIEVED_FILE)?;
    let cache = Arc::new(DiskCache::new(&cfg.run.cache_dir));
    let results = rerank_all(&days, &retrieved, backend.as_ref(), Some(&cache), cutoff);
    let failures = results.iter().filter(|r| matches!(r, Some(Err(_)))).count();
    let clusters: Vec<RankedCluster> = results.into_iter().filter_map(|r| r.and_then(Result::ok)).collect();
    write(&out, CLUSTERS_FILE, &clusters)?;
    Ok(partial(failures))
}

fn cmd_extract(c: &Common) -> Outcome {
    let (cfg, out) = load_config(c)?;
    cfg.check_inputs().map_err(PipelineError::from)?;
    let registries = Registries::default();
    let env = BackendEnv::new(cfg.clone());
    let cache = Arc::new(DiskCache::new(&cfg.run.cache_dir));
    let llm = build_llm(&registries, &env, &cache)?;
    let (template, demonstration) = load_prompt(&cfg)?;
    let clusters: Vec<RankedCluster> = read(&out, CLUSTERS_FILE)?;
    let outcomes = extract_clusters(&clusters, llm.as_ref(), &template, &demonstration);
    let failures = outcomes.iter().filter(|o| o.error.is_some()).count();
    let audit: Vec<_> = outcomes.iter().map(|o| o.audit.clone()).collect();
    let facts: Vec<FactsRecord> = outcomes.into_iter().filter_map(|o| o.record).collect();
    write(&out, FACTS_FILE, &facts)?;
    write(&out, AUDIT_FILE, &audit)?;
    Ok(partial(failures))
}

fn write_submission(cfg: &RunConfig, out: &Path, summaries: &[Summary]) -> Result<(), Failure> {
    write(out, SUBMISSION_FILE, &submission_records(&cfg.run_id, summaries))
}

fn cmd_summarize(c: &Common) -> Outcome {
    let (cfg, out) = load_config(c)?;
    let facts: Vec<FactsRecord> = read(&out, FACTS_FILE)?;
    let mut summaries = Vec::new();
    for d in load_days(&cfg)? {
        let day: Vec<FactsRecord> = facts
            .iter()
            .filter(|f| f.query.event_id == d.event_id && f.query.request_id == d.request_id)
            .cloned()
            .collect();
        let (s, _) = summarize_facts(&d.event_id, &d.request_id, &day, &cfg).map_err(anyhow::Error::msg)?;
        summaries.push(s);
    }
    write_submission(&cfg, &out, &summaries)?;
    Ok(None)
}

fn cmd_baseline(c: &Common, which: Baseline, lambda: Option<f64>) -> Outcome {
    let (mut cfg, out) = load_config(c)?;
    if let Some(l) = lambda {
        cfg.nuggets.mmr_lambda = l;
        cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    }
    let name = match which {
        Baseline::Greedy => pipeline::GreedyStrategy::NAME,
        Baseline::Mmr => pipeline::MmrStrategy::NAME,
    };
    let registries = Registries::default();
    let strategy = registries.strategy.build(name, &BackendEnv::new(cfg.clone())).map_err(PipelineError::from)?;
    let clusters: Vec<RankedCluster> = read(&out, CLUSTERS_FILE)?;
    let days = day_data(&cfg, &out)?;
    let (template, demonstration) = load_prompt(&cfg)?;
    let env = StrategyEnv { config: &cfg, llm: None, template: &template, demonstration: &demonstration };
    let mut summaries = Vec::new();
    for d in &days {
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
        summaries.push(strategy.summarize_day(&input, &env).map_err(anyhow::Error::msg)?.summary);
    }
    write_submission(&cfg, &out, &summaries)?;
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    submission: &Path,
    meta_facts: &Path,
    config: Option<&Path>,
    similarity: Option<String>,
    threshold: Option<f64>,
    cutoff: Option<usize>,
    report_path: Option<&Path>,
) -> Outcome {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Config(e.into()))?,
        None => RunConfig::new(
            "evaluate",
            crisis_nuggets::config::Inputs {
                stream_items: vec![submission.to_path_buf()],
                request_days: PathBuf::new(),
                queries: PathBuf::new(),
                sources: vec![],
            },
        ),
    };
    if let Some(s) = similarity {
        cfg.eval.similarity_backend = s;
    }
    if let Some(t) = threshold {
        cfg.eval.threshold = t;
    }
    let cutoff = cutoff.unwrap_or(cfg.nuggets.cutoff_human);
    let registries = Registries::default();
    let env = BackendEnv::new(cfg.clone());
    let cache = Arc::new(DiskCache::new(&cfg.run.cache_dir));
    let scorer = build_similarity(&registries, &env, &cache)?;
    let report = run_eval(submission, meta_facts, scorer.as_ref(), cfg.eval.threshold, cutoff)?;
    print!("{}", report.table());
    if let Some(p) = report_path {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(None)
}

fn cmd_run_all(c: &Common, strategy: &str) -> Outcome {
    let (cfg, out) = load_config(c)?;
    let output = run_pipeline(&cfg, &Registries::default(), strategy)?;
    output.write(&out)?;
    let m = &output.manifest;
    eprintln!(
        "{} triples: {} ok, {} skipped-empty, {} failed; {} nuggets written to {}",
        m.triples.len(),
        m.count(pipeline::TripleStatus::Ok),
        m.count(pipeline::TripleStatus::SkippedEmpty),
        m.failures(),
        output.submission().len(),
        out.join(SUBMISSION_FILE).display()
    );
    Ok(partial(m.failures()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Ingest(c) => cmd_ingest(c),
        Command::Index(c) => cmd_index(c),
        Command::Retrieve(c) => cmd_retrieve(c),
        Command::Rerank { common, k2, strategy } => cmd_rerank(common, *k2, strategy),
        Command::Extract(c) => cmd_extract(c),
        Command::Summarize(c) => cmd_summarize(c),
        Command::Baseline { common, which, lambda } => cmd_baseline(common, *which, *lambda),
        Command::Evaluate { submission, meta_facts, config, similarity, threshold, cutoff, report } => cmd_evaluate(
            submission,
            meta_facts,
            config.as_deref(),
            similarity.clone(),
            *threshold,
            *cutoff,
            report.as_deref(),
        ),
        Command::RunAll { common, strategy } => cmd_run_all(common, strategy),
    };
    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Partial(n))) => {
            eprintln!("{n} triple(s) failed; see the log and manifest");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
