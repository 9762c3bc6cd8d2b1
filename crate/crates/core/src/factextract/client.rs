//! Instruction-following model clients.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{content_hash, DiskCache};
use crate::corpus::parse_lines;
use crate::sidecar::{SidecarClient, SidecarError};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error("no canned response for prompt hash {0}")]
    UnknownPrompt(String),
}

pub trait LlmClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;

    /// Worth memoizing on disk.
    fn cacheable(&self) -> bool {
        false
    }
}

/// One line of a replay fixture file. `promptHash` may be omitted when
/// `prompt` is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRecord {
    #[serde(rename = "promptHash", default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub response: String,
}

/// Replays canned responses keyed by the SHA-256 of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    responses: HashMap<String, String>,
}

impl ReplayClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(content_hash(prompt), response.into());
    }

    pub fn insert_hash(&mut self, hash: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(hash.into(), response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Loads a line-delimited fixture file. Malformed lines are an error.
    pub fn from_file(path: &Path) -> io::Result<Self> {
        let loaded = parse_lines::<ReplayRecord, _>(BufReader::new(File::open(path)?))?;
        if let Some(e) = loaded.errors.first() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())));
        }
        let mut client = Self::new();
        for rec in loaded.records {
            let hash = match (rec.prompt_hash, rec.prompt) {
                (Some(h), _) => h,
                (None, Some(p)) => content_hash(&p),
                (None, None) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        "replay record needs `promptHash` or `prompt`",
                    ))
                }
            };
            client.insert_hash(hash, rec.response);
        }
        Ok(client)
    }
}

impl LlmClient for ReplayClient {
    fn name(&self) -> &str {
        "fixture"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let hash = content_hash(prompt);
        self.responses.get(&hash).cloned().ok_or(LlmError::UnknownPrompt(hash))
    }
}

/// Generates through the sidecar's `/generate` endpoint.
pub struct RemoteLlm {
    client: Arc<SidecarClient>,
}

impl RemoteLlm {
    pub fn new(client: Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl LlmClient for RemoteLlm {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        Ok(self.client.generate(prompt)?)
    }

    fn cacheable(&self) -> bool {
        true
    }
}

/// Reuses responses stored under the prompt's content hash.
pub struct CachedLlm {
    inner: Arc<dyn LlmClient>,
    cache: Arc<DiskCache>,
}

impl CachedLlm {
    pub const NAMESPACE: &'static str = "generate";

    pub fn new(inner: Arc<dyn LlmClient>, cache: Arc<DiskCache>) -> Self {
        Self { inner, cache }
    }
}

impl LlmClient for CachedLlm {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let key = content_hash(prompt);
        if let Some(hit) = self.cache.get::<String>(Self::NAMESPACE, &key) {
            return Ok(hit);
        }
        let text = self.inner.complete(prompt)?;
        if let Err(e) = self.cache.put(Self::NAMESPACE, &key, &text) {
            log::warn!("generation cache write failed: {e}");
        }
        Ok(text)
    }

    fn cacheable(&self) -> bool {
        self.inner.cacheable()
    }
}
