//! Caption augmentation through an external completion endpoint.
//!
//! The client is abstracted so tests run against a scripted mock; the real
//! HTTP client lives behind the `http-client` feature. Requests run on a
//! bounded pool of worker threads and results merge back by record id, so
//! output order never depends on completion order.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{build_fewshot_prompt, ImagePairRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub stop: String,
    pub max_retries: usize,
    pub backoff_base_ms: u64,
    pub concurrency: usize,
    pub api_key_env: String,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: "http://localhost:8080/v1/completions".into(),
            model: "davinci".into(),
            temperature: 0.7,
            max_tokens: 128,
            // completions are single-paragraph summaries; stop at a blank line
            stop: "\n\n".into(),
            max_retries: 3,
            backoff_base_ms: 250,
            concurrency: 4,
            api_key_env: "VIXEN_API_KEY".into(),
        }
    }
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.concurrency < 1 {
            errs.push("concurrency bound must be >= 1".to_string());
        }
        if self.endpoint.is_empty() {
            errs.push("endpoint must not be empty".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// One completion attempt. `RateLimited` asks the caller to back off
/// harder; `Transport` is any other retryable failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    Transport(String),
    RateLimited,
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str) -> std::result::Result<String, ClientError>;
}

/// Outcome of one record's augmentation, for the audit log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AuditOutcome {
    Filled,
    Empty,
    Failed,
    AlreadyFilled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: String,
    pub attempts: usize,
    pub latency_ms: u64,
    pub outcome: AuditOutcome,
}

fn fill_one(
    client: &dyn CompletionClient,
    cfg: &LlmClientConfig,
    prompt: &str,
) -> (Option<String>, usize) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.complete(prompt) {
            Ok(text) => return (Some(text.trim().to_string()), attempts),
            Err(err) => {
                if attempts > cfg.max_retries {
                    return (None, attempts);
                }
                // exponential backoff; a rate-limit response waits double
                let mut wait = cfg.backoff_base_ms.saturating_mul(1 << (attempts - 1).min(16));
                if err == ClientError::RateLimited {
                    wait = wait.saturating_mul(2);
                }
                if wait > 0 {
                    std::thread::sleep(Duration::from_millis(wait));
                }
            }
        }
    }
}

/// Fills missing `change_summary` fields via the client. Already-filled
/// records are untouched; failed records stay unfilled and are flagged in
/// the returned audit log, which is sorted by record id.
pub fn augment_with_llm(
    records: &mut [ImagePairRecord],
    client: &dyn CompletionClient,
    cfg: &LlmClientConfig,
) -> Result<Vec<AuditEntry>> {
    cfg.validate()?;
    let mut audit: Vec<AuditEntry> = Vec::new();
    let mut todo: VecDeque<usize> = VecDeque::new();
    for (i, rec) in records.iter().enumerate() {
        if rec.change_summary.is_some() {
            audit.push(AuditEntry {
                id: rec.id.clone(),
                attempts: 0,
                latency_ms: 0,
                outcome: AuditOutcome::AlreadyFilled,
            });
        } else {
            todo.push_back(i);
        }
    }
    // prompts are built up front so a bad record fails before any request
    let mut prompts: Vec<(usize, String)> = Vec::with_capacity(todo.len());
    for &i in &todo {
        prompts.push((i, build_fewshot_prompt(&records[i])?));
    }

    let queue: Mutex<VecDeque<(usize, String)>> = Mutex::new(prompts.into());
    let results: Mutex<Vec<(usize, Option<String>, AuditEntry)>> = Mutex::new(Vec::new());
    let workers = cfg.concurrency.min(todo.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue poisoned").pop_front();
                let Some((idx, prompt)) = job else { break };
                let start = Instant::now();
                let (text, attempts) = fill_one(client, cfg, &prompt);
                let latency_ms = start.elapsed().as_millis() as u64;
                let outcome = match &text {
                    Some(t) if t.is_empty() => AuditOutcome::Empty,
                    Some(_) => AuditOutcome::Filled,
                    None => AuditOutcome::Failed,
                };
                results.lock().expect("results poisoned").push((
                    idx,
                    text,
                    AuditEntry {
                        id: String::new(), // filled in after merge
                        attempts,
                        latency_ms,
                        outcome,
                    },
                ));
            });
        }
    });

    for (idx, text, mut entry) in results.into_inner().expect("results poisoned") {
        entry.id = records[idx].id.clone();
        if entry.outcome == AuditOutcome::Filled {
            records[idx].change_summary = text;
        }
        audit.push(entry);
    }
    audit.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(audit)
}

/// Deterministic test client. Scripted failures are keyed by how many
/// calls a given prompt has already seen; concurrency is instrumented.
pub struct MockClient {
    /// number of failures to serve before succeeding, per request
    fail_first: usize,
    rate_limit: bool,
    respond_empty: bool,
    calls: Mutex<std::collections::HashMap<String, usize>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    delay: Duration,
}

impl MockClient {
    pub fn new() -> Self {
        MockClient {
            fail_first: 0,
            rate_limit: false,
            respond_empty: false,
            calls: Mutex::new(std::collections::HashMap::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            delay: Duration::ZERO,
        }
    }

    pub fn failing_first(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    pub fn rate_limited(mut self) -> Self {
        self.rate_limit = true;
        self
    }

    pub fn empty_responses(mut self) -> Self {
        self.respond_empty = true;
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().expect("calls poisoned").values().sum()
    }

    /// Echoes the query's Image 1 caption so fills are deterministic.
    fn summary_for(prompt: &str) -> String {
        let query = prompt.rsplit("Example 3:").next().unwrap_or(prompt);
        let caption = query
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Image 1: "))
            .unwrap_or("unknown");
        format!("SUMMARY-{caption}")
    }
}

impl Default for MockClient {
    fn default() -> Self {
        MockClient::new()
    }
}

impl CompletionClient for MockClient {
    fn complete(&self, prompt: &str) -> std::result::Result<String, ClientError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let seen = {
            let mut calls = self.calls.lock().expect("calls poisoned");
            let c = calls.entry(prompt.to_string()).or_insert(0);
            *c += 1;
            *c
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if seen <= self.fail_first {
            return Err(if self.rate_limit {
                ClientError::RateLimited
            } else {
                ClientError::Transport("scripted failure".into())
            });
        }
        if self.respond_empty {
            return Ok("   ".into());
        }
        Ok(Self::summary_for(prompt))
    }
}

/// Minimal completion-API client. Posts JSON to `endpoint` and reads the
/// first choice's text. The API key comes from the configured env var.
#[cfg(feature = "http-client")]
pub struct HttpCompletionClient {
    cfg: LlmClientConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
}

#[cfg(feature = "http-client")]
impl HttpCompletionClient {
    pub fn new(cfg: LlmClientConfig) -> Result<Self> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env).ok();
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Client(e.to_string()))?;
        Ok(HttpCompletionClient { cfg, http, api_key })
    }
}

#[cfg(feature = "http-client")]
impl CompletionClient for HttpCompletionClient {
    fn complete(&self, prompt: &str) -> std::result::Result<String, ClientError> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "prompt": prompt,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
            "stop": self.cfg.stop,
        });
        let mut req = self.http.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if resp.status().as_u16() == 429 {
            return Err(ClientError::RateLimited);
        }
        if !resp.status().is_success() {
            return Err(ClientError::Transport(format!("status {}", resp.status())));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let text = value["choices"][0]["text"].as_str().unwrap_or_default();
        Ok(text.to_string())
    }
}
