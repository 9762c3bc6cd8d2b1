//! Run configuration, read from a versioned TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{Bm25Params, Bo1Params, RetrieveParams};
use crate::nuggets::{AUTOMATIC_CUTOFF, HUMAN_CUTOFF, NUGGET_CHAR_LIMIT};
use crate::sidecar::{RetryPolicy, SIDECAR_URL_ENV};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub run_id: String,
    pub inputs: Inputs,
    #[serde(default)]
    pub retrieval: Retrieval,
    #[serde(default)]
    pub rerank: Rerank,
    #[serde(default)]
    pub generation: Generation,
    #[serde(default)]
    pub nuggets: Nuggets,
    #[serde(default)]
    pub eval: Eval,
    #[serde(default)]
    pub sidecar: Sidecar,
    #[serde(default)]
    pub run: Run,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Line-delimited stream-item files.
    pub stream_items: Vec<PathBuf>,
    pub request_days: PathBuf,
    pub queries: PathBuf,
    /// Source types to keep; all when empty.
    #[serde(default)]
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Retrieval {
    pub k1_cut: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub feedback_docs: usize,
    pub expansion_terms: usize,
}

impl Default for Retrieval {
    fn default() -> Self {
        let p = RetrieveParams::default();
        Self {
            k1_cut: p.cutoff,
            bm25_k1: p.bm25.k1,
            bm25_b: p.bm25.b,
            feedback_docs: p.bo1.feedback_docs,
            expansion_terms: p.bo1.expansion_terms,
        }
    }
}

impl Retrieval {
    pub fn params(&self) -> RetrieveParams {
        RetrieveParams {
            bm25: Bm25Params { k1: self.bm25_k1, b: self.bm25_b },
            bo1: Bo1Params { feedback_docs: self.feedback_docs, expansion_terms: self.expansion_terms },
            cutoff: self.k1_cut,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rerank {
    pub backend: String,
    pub k2_cut_llm: usize,
    pub k2_cut_baseline: usize,
}

impl Default for Rerank {
    fn default() -> Self {
        Self { backend: "lexical".into(), k2_cut_llm: 30, k2_cut_baseline: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Generation {
    pub backend: String,
    /// Replay file for the `fixture` backend.
    pub fixture: Option<PathBuf>,
    /// Prompt template overriding the built-in one.
    pub template: Option<PathBuf>,
    /// Demonstration overriding the built-in one.
    pub demonstration: Option<PathBuf>,
}

impl Default for Generation {
    fn default() -> Self {
        Self { backend: "fixture".into(), fixture: None, template: None, demonstration: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Nuggets {
    pub strategy: String,
    pub char_limit: usize,
    pub cutoff_automatic: usize,
    pub cutoff_human: usize,
    pub mmr_lambda: f64,
}

impl Default for Nuggets {
    fn default() -> Self {
        Self {
            strategy: "llama-nuggets".into(),
            char_limit: NUGGET_CHAR_LIMIT,
            cutoff_automatic: AUTOMATIC_CUTOFF,
            cutoff_human: HUMAN_CUTOFF,
            mmr_lambda: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Eval {
    pub similarity_backend: String,
    pub threshold: f64,
}

impl Default for Eval {
    fn default() -> Self {
        Self { similarity_backend: "token_f1".into(), threshold: crate::eval::DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sidecar {
    pub url: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
}

impl Default for Sidecar {
    fn default() -> Self {
        let r = RetryPolicy::default();
        Self {
            url: "http://127.0.0.1:8700".into(),
            timeout_secs: 300,
            max_in_flight: 4,
            max_retries: r.max_retries,
            retry_base_delay_ms: r.base_delay_ms,
        }
    }
}

impl Sidecar {
    /// The configured address unless the environment overrides it.
    pub fn resolved_url(&self) -> String {
        std::env::var(SIDECAR_URL_ENV).ok().filter(|s| !s.is_empty()).unwrap_or_else(|| self.url.clone())
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries, base_delay_ms: self.retry_base_delay_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Run {
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Worker threads; 0 picks one per core.
    pub workers: usize,
}

impl Default for Run {
    fn default() -> Self {
        Self { cache_dir: "cache".into(), output_dir: "out".into(), workers: 0 }
    }
}

impl RunConfig {
    /// A configuration with defaults everywhere except the inputs.
    pub fn new(run_id: impl Into<String>, inputs: Inputs) -> Self {
        Self {
            version: CONFIG_VERSION,
            run_id: run_id.into(),
            inputs,
            retrieval: Retrieval::default(),
            rerank: Rerank::default(),
            generation: Generation::default(),
            nuggets: Nuggets::default(),
            eval: Eval::default(),
            sidecar: Sidecar::default(),
            run: Run::default(),
        }
    }

    /// Reads, validates, and resolves relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        cfg.validate()?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.run_id.trim().is_empty() {
            return bad("run_id is empty");
        }
        if self.inputs.stream_items.is_empty() {
            return bad("inputs.stream_items is empty");
        }
        let cuts = [
            ("retrieval.k1_cut", self.retrieval.k1_cut),
            ("rerank.k2_cut_llm", self.rerank.k2_cut_llm),
            ("rerank.k2_cut_baseline", self.rerank.k2_cut_baseline),
            ("nuggets.char_limit", self.nuggets.char_limit),
            ("nuggets.cutoff_automatic", self.nuggets.cutoff_automatic),
            ("nuggets.cutoff_human", self.nuggets.cutoff_human),
        ];
        if let Some((name, _)) = cuts.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.nuggets.mmr_lambda) {
            return bad("nuggets.mmr_lambda must lie in [0, 1]");
        }
        if !(self.eval.threshold > 0.0 && self.eval.threshold <= 1.0) {
            return bad("eval.threshold must lie in (0, 1]");
        }
        if self.nuggets.char_limit != NUGGET_CHAR_LIMIT {
            log::warn!(
                "nuggets.char_limit = {} differs from the track limit of {NUGGET_CHAR_LIMIT}",
                self.nuggets.char_limit
            );
        }
        for s in &self.inputs.sources {
            s.parse::<crate::corpus::SourceType>().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inputs.stream_items.iter_mut().for_each(fix);
        fix(&mut self.inputs.request_days);
        fix(&mut self.inputs.queries);
        for p in [&mut self.generation.fixture, &mut self.generation.template, &mut self.generation.demonstration]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.run.cache_dir);
        fix(&mut self.run.output_dir);
    }

    /// Checks that every input file exists.
    pub fn check_inputs(&self) -> Result<(), ConfigError> {
        let mut paths: Vec<&PathBuf> = self.inputs.stream_items.iter().collect();
        paths.push(&self.inputs.request_days);
        paths.push(&self.inputs.queries);
        paths.extend(self.generation.template.iter());
        paths.extend(self.generation.demonstration.iter());
        if self.generation.backend == "fixture" {
            match &self.generation.fixture {
                Some(p) => paths.push(p),
                None => {
                    return Err(ConfigError::Invalid("generation.fixture is required for the fixture backend".into()))
                }
            }
        }
        match paths.into_iter().find(|p| !p.is_file()) {
            Some(p) => Err(ConfigError::Invalid(format!("input file {} not found", p.display()))),
            None => Ok(()),
        }
    }
}
