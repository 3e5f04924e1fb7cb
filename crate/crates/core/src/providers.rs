// SPDX-License-Identifier: MIT OR Apache-2.0

//! Chat-completion clients and sequential n-run batches.
//!
//! Wire formats:
//!
//! ```text
//! anthropic_messages       POST {base}/v1/messages           x-api-key
//! openai_compatible        POST {base}/v1/chat/completions   Authorization: Bearer
//! local_openai_compatible  same, credential optional
//! stub                     no network; canned text per run
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::layout::{self, RunPaths, MANIFEST_FILE};
use crate::metrics::content_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    AnthropicMessages,
    OpenaiCompatible,
    LocalOpenaiCompatible,
    Stub,
}

impl EndpointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::AnthropicMessages => "anthropic_messages",
            EndpointKind::OpenaiCompatible => "openai_compatible",
            EndpointKind::LocalOpenaiCompatible => "local_openai_compatible",
            EndpointKind::Stub => "stub",
        }
    }

    pub fn is_remote(self) -> bool {
        matches!(self, EndpointKind::AnthropicMessages | EndpointKind::OpenaiCompatible)
    }

    pub fn default_base_url(self) -> &'static str {
        match self {
            EndpointKind::AnthropicMessages => "https://api.anthropic.com",
            EndpointKind::OpenaiCompatible => "https://api.mistral.ai",
            EndpointKind::LocalOpenaiCompatible => "http://127.0.0.1:1234",
            EndpointKind::Stub => "stub://",
        }
    }

    pub fn default_credential_env_var(self) -> Option<&'static str> {
        match self {
            EndpointKind::AnthropicMessages => Some("ANTHROPIC_API_KEY"),
            EndpointKind::OpenaiCompatible => Some("MISTRAL_API_KEY"),
            _ => None,
        }
    }
}

impl fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EndpointKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anthropic" | "anthropic_messages" => Ok(EndpointKind::AnthropicMessages),
            "openai" | "openai_compatible" | "mistral" => Ok(EndpointKind::OpenaiCompatible),
            "local" | "local_openai_compatible" => Ok(EndpointKind::LocalOpenaiCompatible),
            "stub" => Ok(EndpointKind::Stub),
            other => Err(Error::Config(format!("unknown provider {other:?}"))),
        }
    }
}

/// Retries cover transport errors, 429 and 5xx only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 1_000,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Wait before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_kind: EndpointKind,
    pub model_id: String,
    pub base_url: String,
    #[serde(default)]
    pub credential_env_var: Option<String>,
    #[serde(default)]
    pub delay_ms: u64,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_request_timeout")]
    pub request_timeout_s: u64,
    /// Canned replies for the stub, cycled by run index. Not persisted.
    #[serde(default, skip_serializing)]
    pub stub_responses: Vec<String>,
    /// Run indices at which the stub fails hard.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stub_fail_runs: Vec<u32>,
}

fn default_request_timeout() -> u64 {
    600
}

impl ProviderConfig {
    pub fn new(endpoint_kind: EndpointKind, model_id: impl Into<String>) -> Self {
        Self {
            endpoint_kind,
            model_id: model_id.into(),
            base_url: endpoint_kind.default_base_url().into(),
            credential_env_var: endpoint_kind.default_credential_env_var().map(Into::into),
            delay_ms: 0,
            max_output_tokens: 8_192,
            retry: RetryPolicy::default(),
            request_timeout_s: default_request_timeout(),
            stub_responses: Vec::new(),
            stub_fail_runs: Vec::new(),
        }
    }

    pub fn stub(responses: Vec<String>) -> Self {
        Self {
            stub_responses: responses,
            ..Self::new(EndpointKind::Stub, "stub")
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_output_tokens == 0 {
            return Err(Error::Config("max_output_tokens must be positive".into()));
        }
        if self.model_id.is_empty() {
            return Err(Error::Config("model id is empty".into()));
        }
        if self.endpoint_kind.is_remote() && self.credential_env_var.as_deref().unwrap_or("").is_empty() {
            return Err(Error::Config(format!(
                "{} endpoints need a credential variable",
                self.endpoint_kind
            )));
        }
        if self.endpoint_kind == EndpointKind::Stub && self.stub_responses.is_empty() {
            return Err(Error::Config("stub provider has no canned responses".into()));
        }
        Ok(())
    }

    fn credential(&self) -> Result<Option<String>> {
        let Some(var) = self.credential_env_var.as_deref().filter(|v| !v.is_empty()) else {
            return Ok(None);
        };
        match std::env::var(var) {
            Ok(v) if !v.is_empty() => Ok(Some(v)),
            _ if self.endpoint_kind.is_remote() => Err(Error::Credential(format!("{var} is not set"))),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub run_index: u32,
    pub prompt_hash: String,
    /// Kept in the run's response file, not in the manifest.
    #[serde(default, skip_serializing)]
    pub response_text: String,
    pub latency_ms: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(default = "one")]
    pub attempts: u32,
}

fn one() -> u32 {
    1
}

struct Reply {
    text: String,
    input_tokens: u64,
    output_tokens: u64,
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

fn endpoint_url(config: &ProviderConfig) -> String {
    let base = config.base_url.trim_end_matches('/');
    let base = base.strip_suffix("/v1").unwrap_or(base);
    match config.endpoint_kind {
        EndpointKind::AnthropicMessages => format!("{base}/v1/messages"),
        _ => format!("{base}/v1/chat/completions"),
    }
}

fn request_body(config: &ProviderConfig, prompt: &str, temperature: f64) -> Value {
    json!({
        "model": config.model_id,
        "max_tokens": config.max_output_tokens,
        "temperature": temperature,
        "messages": [{"role": "user", "content": prompt}],
    })
}

fn parse_reply(kind: EndpointKind, body: &str) -> Result<Reply> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::Protocol(format!("reply is not JSON: {e}")))?;
    let tokens = |key: &str| v["usage"][key].as_u64().unwrap_or(0);
    match kind {
        EndpointKind::AnthropicMessages => {
            let blocks = v["content"]
                .as_array()
                .ok_or_else(|| Error::Protocol("reply has no content array".into()))?;
            let text: String = blocks
                .iter()
                .filter(|b| b["type"] == "text")
                .filter_map(|b| b["text"].as_str())
                .collect();
            Ok(Reply {
                text,
                input_tokens: tokens("input_tokens"),
                output_tokens: tokens("output_tokens"),
            })
        }
        _ => {
            let text = v["choices"][0]["message"]["content"]
                .as_str()
                .ok_or_else(|| Error::Protocol("reply has no choices[0].message.content".into()))?;
            Ok(Reply {
                text: text.to_owned(),
                input_tokens: tokens("prompt_tokens"),
                output_tokens: tokens("completion_tokens"),
            })
        }
    }
}

fn http_attempt(agent: &ureq::Agent, config: &ProviderConfig, key: Option<&str>, body: &str) -> std::result::Result<Reply, Failure> {
    let mut req = agent
        .post(endpoint_url(config))
        .header("content-type", "application/json");
    match (config.endpoint_kind, key) {
        (EndpointKind::AnthropicMessages, Some(k)) => {
            req = req.header("x-api-key", k).header("anthropic-version", "2023-06-01");
        }
        (EndpointKind::AnthropicMessages, None) => {
            req = req.header("anthropic-version", "2023-06-01");
        }
        (_, Some(k)) => req = req.header("authorization", &format!("Bearer {k}")),
        (_, None) => {}
    }
    let mut resp = match req.send(body) {
        Ok(r) => r,
        Err(e) => return Err(Failure::Retryable(format!("transport: {e}"))),
    };
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Failure::Retryable(format!("reading body: {e}")))?;
    match status {
        200..=299 => parse_reply(config.endpoint_kind, &text).map_err(Failure::Fatal),
        401 | 403 => Err(Failure::Fatal(Error::Credential(format!("HTTP {status}: {text}")))),
        429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}"))),
        _ => Err(Failure::Fatal(Error::Protocol(format!("HTTP {status}: {text}")))),
    }
}

/// Issues requests for one provider configuration.
pub struct Client {
    config: ProviderConfig,
    agent: Option<ureq::Agent>,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

impl Client {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let agent = (config.endpoint_kind != EndpointKind::Stub).then(|| {
            ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(config.request_timeout_s)))
                .build()
                .into()
        });
        Ok(Self {
            config,
            agent,
            sleep: Box::new(std::thread::sleep),
        })
    }

    /// Replace the backoff sleeper, for tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// One completion for `run_index`, retrying transient failures.
    pub fn generate(&self, prompt: &str, temperature: f64, run_index: u32) -> Result<GenerationRecord> {
        if prompt.trim().is_empty() {
            return Err(Error::Precondition("prompt is empty".into()));
        }
        let prompt_hash = content_hash(prompt.as_bytes());
        if self.config.endpoint_kind == EndpointKind::Stub {
            return self.stub_generate(prompt_hash, run_index);
        }
        let key = self.config.credential()?;
        let body = request_body(&self.config, prompt, temperature).to_string();
        let agent = self.agent.as_ref().expect("http agent for remote endpoint");
        let start = Instant::now();
        let timestamp = Utc::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match http_attempt(agent, &self.config, key.as_deref(), &body) {
                Ok(reply) => {
                    return Ok(GenerationRecord {
                        run_index,
                        prompt_hash,
                        response_text: reply.text,
                        latency_ms: start.elapsed().as_millis() as u64,
                        input_tokens: reply.input_tokens,
                        output_tokens: reply.output_tokens,
                        timestamp,
                        attempts,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    if attempts > self.config.retry.max_retries {
                        return Err(Error::Throttle { attempts, message: msg });
                    }
                    (self.sleep)(self.config.retry.backoff(attempts));
                }
            }
        }
    }

    fn stub_generate(&self, prompt_hash: String, run_index: u32) -> Result<GenerationRecord> {
        if self.config.stub_fail_runs.contains(&run_index) {
            return Err(Error::Protocol(format!("stub scripted failure at run {run_index}")));
        }
        let responses = &self.config.stub_responses;
        let text = responses[(run_index.max(1) as usize - 1) % responses.len()].clone();
        let words = text.split_whitespace().count() as u64;
        Ok(GenerationRecord {
            run_index,
            prompt_hash,
            response_text: text,
            latency_ms: 0,
            input_tokens: 0,
            output_tokens: words,
            // Fixed so stub batches reproduce byte for byte.
            timestamp: Utc.timestamp_opt(i64::from(run_index), 0).single().unwrap_or_default(),
            attempts: 1,
        })
    }
}

/// Single completion with run index 1.
pub fn generate(config: &ProviderConfig, prompt: &str, temperature: f64) -> Result<GenerationRecord> {
    Client::new(config.clone())?.generate(prompt, temperature, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub experiment_label: String,
    pub provider: ProviderConfig,
    pub n_runs: u32,
    pub temperature: f64,
    pub prompt_hash: String,
    pub status: BatchStatus,
    pub last_successful_run: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub records: Vec<GenerationRecord>,
    pub output_dir: PathBuf,
}

impl BatchManifest {
    pub fn is_complete(&self) -> bool {
        self.status == BatchStatus::Complete
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            message: e.to_string(),
        })
    }

    pub fn save(&self) -> Result<()> {
        let path = self.output_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Source of time for request pacing.
pub trait Clock {
    fn now(&self) -> Duration;
    fn sleep(&mut self, d: Duration);
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }

    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Keeps at least `delay` between consecutive request starts.
#[derive(Debug, Clone)]
pub struct Pacer {
    delay: Duration,
    last_start: Option<Duration>,
}

impl Pacer {
    pub fn new(delay_ms: u64) -> Self {
        Self {
            delay: Duration::from_millis(delay_ms),
            last_start: None,
        }
    }

    /// How long to wait at `now` before the next request may start.
    pub fn wait_at(&self, now: Duration) -> Duration {
        match self.last_start {
            Some(last) => (last + self.delay).saturating_sub(now),
            None => Duration::ZERO,
        }
    }

    /// Sleep as needed, then record the start. Returns the start time.
    pub fn start(&mut self, clock: &mut dyn Clock) -> Duration {
        let wait = self.wait_at(clock.now());
        if !wait.is_zero() {
            clock.sleep(wait);
        }
        let now = clock.now();
        self.last_start = Some(now);
        now
    }
}

pub struct BatchRequest<'a> {
    pub prompt: &'a str,
    pub n_runs: u32,
    pub delay_ms: u64,
    pub label: &'a str,
    pub output_root: &'a Path,
    pub temperature: f64,
}

fn check_label(label: &str) -> Result<()> {
    let ok = !label.is_empty()
        && label != "."
        && label != ".."
        && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("label {label:?} is not filesystem-safe")))
    }
}

fn record_from_file(dir: &Path, run_index: u32, prompt_hash: &str) -> Result<GenerationRecord> {
    let path = RunPaths::new(dir, run_index).response();
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(GenerationRecord {
        run_index,
        prompt_hash: prompt_hash.to_owned(),
        response_text: text,
        latency_ms: 0,
        input_tokens: 0,
        output_tokens: 0,
        timestamp: DateTime::<Utc>::default(),
        attempts: 0,
    })
}

/// Run `n_runs` sequential requests, persisting each reply as it arrives.
///
/// Runs whose response file already exists are kept as they are. A hard
/// failure stops the batch and returns a manifest marked partial.
pub fn run_batch(client: &Client, req: &BatchRequest<'_>, clock: &mut dyn Clock) -> Result<BatchManifest> {
    if req.n_runs == 0 {
        return Err(Error::Precondition("a batch needs at least one run".into()));
    }
    if req.prompt.trim().is_empty() {
        return Err(Error::Precondition("prompt is empty".into()));
    }
    check_label(req.label)?;
    let dir = req.output_root.join(req.label);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let prompt_hash = content_hash(req.prompt.as_bytes());

    let previous = if dir.join(MANIFEST_FILE).exists() {
        Some(BatchManifest::load(&dir)?)
    } else {
        None
    };
    if let Some(prev) = &previous {
        if prev.prompt_hash != prompt_hash {
            return Err(Error::Precondition(format!(
                "{} holds a batch for a different prompt",
                dir.display()
            )));
        }
    }
    let existing = layout::existing_runs(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut manifest = BatchManifest {
        experiment_label: req.label.to_owned(),
        provider: client.config().clone(),
        n_runs: req.n_runs,
        temperature: req.temperature,
        prompt_hash: prompt_hash.clone(),
        status: BatchStatus::Partial,
        last_successful_run: None,
        error: None,
        records: Vec::new(),
        output_dir: dir.clone(),
    };
    let mut pacer = Pacer::new(req.delay_ms);
    for run in 1..=req.n_runs {
        if existing.contains(&run) {
            let kept = previous
                .as_ref()
                .and_then(|p| p.records.iter().find(|r| r.run_index == run).cloned());
            let from_file = record_from_file(&dir, run, &prompt_hash)?;
            manifest.records.push(match kept {
                Some(r) => GenerationRecord {
                    response_text: from_file.response_text,
                    ..r
                },
                None => from_file,
            });
            manifest.last_successful_run = Some(run);
            continue;
        }
        pacer.start(clock);
        match client.generate(req.prompt, req.temperature, run) {
            Ok(record) => {
                let path = RunPaths::new(&dir, run).response();
                fs::write(&path, &record.response_text).map_err(|e| Error::io(&path, e))?;
                manifest.records.push(record);
                manifest.last_successful_run = Some(run);
                manifest.save()?;
            }
            Err(e) => {
                manifest.error = Some(format!("run {run}: {e}"));
                manifest.save()?;
                return Ok(manifest);
            }
        }
    }
    manifest.status = BatchStatus::Complete;
    manifest.save()?;
    Ok(manifest)
}
