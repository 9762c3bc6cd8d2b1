//! Name-keyed registries of interchangeable implementations.
//!
//! Every pluggable component (reranker, generator, similarity, summary
//! strategy) is registered under a stable name and built on demand from a
//! [`BackendEnv`]. Config files and the CLI refer to implementations only by
//! these names.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use thiserror::Error;

use crate::config::RunConfig;
use crate::eval::{RemoteSimilarity, SimilarityScorer, TokenF1};
use crate::factextract::{LlmClient, RemoteLlm, ReplayClient};
use crate::pipeline::{GreedyStrategy, LlamaNuggets, MmrStrategy, SummaryStrategy};
use crate::rerank::{LexicalBackend, RemoteBackend, RerankBackend};
use crate::sidecar::{InFlightLimit, SidecarClient};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown {kind} `{name}` (known: {known})")]
    Unknown { kind: &'static str, name: String, known: String },
    #[error("building {kind} `{name}`: {message}")]
    Build { kind: &'static str, name: String, message: String },
}

type Factory<T> = Box<dyn Fn(&BackendEnv) -> Result<Arc<T>, String> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, factories: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&BackendEnv) -> Result<Arc<T>, String> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, env: &BackendEnv) -> Result<Arc<T>, RegistryError> {
        let factory = self.factories.get(name).ok_or_else(|| RegistryError::Unknown {
            kind: self.kind,
            name: name.to_string(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })?;
        factory(env).map_err(|message| RegistryError::Build { kind: self.kind, name: name.to_string(), message })
    }
}

/// What factories may draw on. The sidecar client is created on first use,
/// so runs with only local backends never touch the network.
pub struct BackendEnv {
    pub config: RunConfig,
    sidecar: OnceLock<Arc<SidecarClient>>,
}

impl BackendEnv {
    pub fn new(config: RunConfig) -> Self {
        Self { config, sidecar: OnceLock::new() }
    }

    pub fn sidecar(&self) -> Result<Arc<SidecarClient>, String> {
        if let Some(c) = self.sidecar.get() {
            return Ok(c.clone());
        }
        let s = &self.config.sidecar;
        let client = SidecarClient::new(
            &s.resolved_url(),
            Duration::from_secs(s.timeout_secs),
            s.retry(),
            InFlightLimit::new(s.max_in_flight),
        )
        .map_err(|e| e.to_string())?;
        Ok(self.sidecar.get_or_init(|| Arc::new(client)).clone())
    }
}

/// All registries with the built-in implementations.
pub struct Registries {
    pub rerank: Registry<dyn RerankBackend>,
    pub llm: Registry<dyn LlmClient>,
    pub similarity: Registry<dyn SimilarityScorer>,
    pub strategy: Registry<dyn SummaryStrategy>,
}

impl Default for Registries {
    fn default() -> Self {
        let mut rerank: Registry<dyn RerankBackend> = Registry::new("reranker");
        rerank
            .register("lexical", |_| Ok(Arc::new(LexicalBackend)))
            .register("remote", |env| Ok(Arc::new(RemoteBackend::new(env.sidecar()?))));

        let mut llm: Registry<dyn LlmClient> = Registry::new("generator");
        llm.register("fixture", |env| {
            let path = env.config.generation.fixture.as_ref().ok_or("generation.fixture is not set")?;
            ReplayClient::from_file(path).map(|c| Arc::new(c) as Arc<dyn LlmClient>).map_err(|e| e.to_string())
        })
        .register("remote", |env| Ok(Arc::new(RemoteLlm::new(env.sidecar()?))));

        let mut similarity: Registry<dyn SimilarityScorer> = Registry::new("similarity backend");
        similarity
            .register("token_f1", |_| Ok(Arc::new(TokenF1)))
            .register("remote", |env| Ok(Arc::new(RemoteSimilarity::new(env.sidecar()?))));

        let mut strategy: Registry<dyn SummaryStrategy> = Registry::new("summary strategy");
        strategy
            .register(LlamaNuggets::NAME, |_| Ok(Arc::new(LlamaNuggets)))
            .register(GreedyStrategy::NAME, |_| Ok(Arc::new(GreedyStrategy)))
            .register(MmrStrategy::NAME, |env| Ok(Arc::new(MmrStrategy { lambda: env.config.nuggets.mmr_lambda })));

        Self { rerank, llm, similarity, strategy }
    }
}
