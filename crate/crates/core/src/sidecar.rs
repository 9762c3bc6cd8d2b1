//! Blocking HTTP client for the model sidecar.
//!
//! Endpoints (JSON bodies):
//!
//! ```text
//! POST /rerank      {query, documents}        -> {scores}
//! POST /generate    {prompt}                  -> {text}
//! POST /similarity  {candidates, references}  -> {f1}
//! GET  /health                                -> backend manifest
//! ```
//!
//! Transport failures, timeouts and 5xx answers are retried with exponential
//! backoff. 4xx answers and malformed bodies fail immediately.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable overriding the configured sidecar address.
pub const SIDECAR_URL_ENV: &str = "CRISIS_NUGGETS_SIDECAR_URL";

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("sidecar returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed sidecar response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 250 }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Arc<Self> {
        Arc::new(Self { max: max.max(1), used: Mutex::new(0), freed: Condvar::new() })
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut used = self.used.lock().unwrap();
        while *used >= self.max {
            used = self.freed.wait(used).unwrap();
        }
        *used += 1;
        InFlightGuard { limit: self }
    }
}

pub struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.limit.used.lock().unwrap() -= 1;
        self.limit.freed.notify_one();
    }
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    documents: &'a [&'a str],
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Serialize)]
struct SimilarityRequest<'a> {
    candidates: &'a [&'a str],
    references: &'a [&'a str],
}

#[derive(Deserialize)]
struct SimilarityResponse {
    f1: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct SidecarClient {
    base_url: String,
    http: reqwest::blocking::Client,
    retry: RetryPolicy,
    limit: Arc<InFlightLimit>,
}

impl SidecarClient {
    pub fn new(
        base_url: &str,
        timeout: Duration,
        retry: RetryPolicy,
        limit: Arc<InFlightLimit>,
    ) -> Result<Self, SidecarError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SidecarError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(Self { base_url: base_url.trim_end_matches('/').to_string(), http, retry, limit })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, SidecarError> {
        let url = format!("{}{}", self.base_url, path);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let outcome = {
                let _slot = self.limit.acquire();
                self.http.post(&url).json(body).send()
            };
            let retryable = match outcome {
                Ok(resp) if resp.status().is_success() => {
                    let bytes = resp.bytes().map_err(|e| SidecarError::Malformed(e.to_string()))?;
                    return serde_json::from_slice(&bytes).map_err(|e| SidecarError::Malformed(e.to_string()));
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let body = resp.text().unwrap_or_default();
                    if status < 500 {
                        return Err(SidecarError::Status { status, body });
                    }
                    format!("HTTP {status}: {body}")
                }
                Err(e) => e.to_string(),
            };
            if attempt > self.retry.max_retries {
                return Err(SidecarError::Transport { attempts: attempt, message: retryable });
            }
            let delay = self.retry.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
            log::warn!("sidecar {path} attempt {attempt} failed ({retryable}); retrying in {delay} ms");
            thread::sleep(Duration::from_millis(delay));
        }
    }

    /// Relevance probabilities, one per document.
    pub fn rerank(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, SidecarError> {
        let resp: RerankResponse = self.post("/rerank", &RerankRequest { query, documents })?;
        if resp.scores.len() != documents.len() {
            return Err(SidecarError::Malformed(format!(
                "expected {} scores, got {}",
                documents.len(),
                resp.scores.len()
            )));
        }
        check_unit_range(&resp.scores)?;
        Ok(resp.scores)
    }

    pub fn generate(&self, prompt: &str) -> Result<String, SidecarError> {
        let resp: GenerateResponse = self.post("/generate", &GenerateRequest { prompt })?;
        Ok(resp.text)
    }

    /// `|candidates| x |references|` matrix of similarity scores.
    pub fn similarity(&self, candidates: &[&str], references: &[&str]) -> Result<Vec<Vec<f64>>, SidecarError> {
        let resp: SimilarityResponse = self.post("/similarity", &SimilarityRequest { candidates, references })?;
        if resp.f1.len() != candidates.len() || resp.f1.iter().any(|row| row.len() != references.len()) {
            return Err(SidecarError::Malformed(format!(
                "expected a {}x{} matrix",
                candidates.len(),
                references.len()
            )));
        }
        for row in &resp.f1 {
            check_unit_range(row)?;
        }
        Ok(resp.f1)
    }

    /// The sidecar's backend manifest.
    pub fn health(&self) -> Result<serde_json::Value, SidecarError> {
        let url = format!("{}/health", self.base_url);
        let resp =
            self.http.get(&url).send().map_err(|e| SidecarError::Transport { attempts: 1, message: e.to_string() })?;
        if !resp.status().is_success() {
            let status = resp.status().as_u16();
            return Err(SidecarError::Status { status, body: resp.text().unwrap_or_default() });
        }
        resp.json().map_err(|e| SidecarError::Malformed(e.to_string()))
    }
}

fn check_unit_range(xs: &[f64]) -> Result<(), SidecarError> {
    match xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        Some(x) => Err(SidecarError::Malformed(format!("score {x} outside [0, 1]"))),
        None => Ok(()),
    }
}
