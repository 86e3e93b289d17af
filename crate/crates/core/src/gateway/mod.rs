//! Uniform interface to an LLM backend: greedy completions and next-token
//! probability queries, behind retry, concurrency, and rate limits.
//!
//! Two backends ship with the toolkit: [`remote::RemoteBackend`] speaks a
//! minimal JSON-over-HTTP wire contract (with a configurable adapter for
//! third-party API shapes), and [`scripted::ScriptedBackend`] replays
//! fixtures keyed by a SHA-256 digest of the exact prompt text, which makes
//! end-to-end runs bit-reproducible and catches any unintended prompt
//! drift.

pub mod limit;
pub mod remote;
pub mod scripted;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use limit::{Semaphore, TokenBucket};

/// A greedy completion request. Decoding is always zero-temperature; no
/// sampling parameters exist on purpose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
}

/// How next-token masses were obtained: real log-probabilities, or
/// empirical frequencies from repeated single-token samples on backends
/// without log-probability support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMode {
    Logprob,
    Sampled,
}

impl EstimationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimationMode::Logprob => "logprob",
            EstimationMode::Sampled => "sampled",
        }
    }
}

/// Probability mass over the discrete score set {0,1,2,3,4}.
///
/// Raw (unnormalized) distributions hold the mass the model put on each
/// label as a continuation; they need not sum to 1 because the rest of the
/// vocabulary holds the remainder. Normalized distributions sum to 1
/// within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    probabilities: [f64; 5],
    normalized: bool,
}

impl ScoreDistribution {
    pub fn raw(probabilities: [f64; 5]) -> Result<Self, GatewayError> {
        Self::validated(probabilities, false)
    }

    pub fn normalized(probabilities: [f64; 5]) -> Result<Self, GatewayError> {
        let dist = Self::validated(probabilities, true)?;
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GatewayError::InvalidMass(format!(
                "normalized distribution sums to {total}, not 1"
            )));
        }
        Ok(dist)
    }

    fn validated(probabilities: [f64; 5], normalized: bool) -> Result<Self, GatewayError> {
        for (score, p) in probabilities.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(p) {
                return Err(GatewayError::InvalidMass(format!(
                    "mass for score {score} is {p}, expected a probability in [0, 1]"
                )));
            }
        }
        Ok(Self {
            probabilities,
            normalized,
        })
    }

    pub fn probabilities(&self) -> &[f64; 5] {
        &self.probabilities
    }

    pub fn get(&self, score: u8) -> f64 {
        self.probabilities[score as usize]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Connection, retry, and request-shaping settings for a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer credential;
    /// `None` sends no Authorization header.
    pub auth_token_env: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    pub requests_per_minute: Option<u32>,
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
    /// Single-token samples used to estimate masses on backends without
    /// log-probability support.
    pub sample_count: u32,
    /// Wire shape: the native contract, or an adapter mapping for a
    /// third-party API.
    pub wire: remote::WireConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            auth_token_env: None,
            timeout_ms: 30_000,
            max_retries: 2,
            max_concurrency: 4,
            requests_per_minute: None,
            backoff_initial_ms: 100,
            backoff_max_ms: 5_000,
            max_tokens: 512,
            stop_sequences: vec!["\n\nD)".to_string()],
            sample_count: 32,
            wire: remote::WireConfig::Native,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(GatewayError::Config(
                "max_concurrency must be at least 1".into(),
            ));
        }
        if self.requests_per_minute == Some(0) {
            return Err(GatewayError::Config(
                "requests_per_minute must be positive when set".into(),
            ));
        }
        if self.sample_count == 0 {
            return Err(GatewayError::Config("sample_count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("prompt must be non-empty")]
    EmptyPrompt,
    #[error("backend unreachable after {attempts} attempt(s): {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend returned status {status} after {attempts} attempt(s): {message}")]
    BackendStatus {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("unknown-fixture: no scripted response for prompt digest {digest}")]
    UnknownFixture { digest: String },
    #[error("fixture {digest} is a {actual} fixture, expected {expected}")]
    FixtureKind {
        digest: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("backend supports neither log-probabilities nor sampling")]
    MissingCapability,
    #[error("invalid score candidate {candidate:?}: {reason}")]
    InvalidCandidate { candidate: String, reason: String },
    #[error("malformed backend response: {0}")]
    WireFormat(String),
    #[error("invalid probability mass: {0}")]
    InvalidMass(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors worth retrying within the gateway: transient transport
    /// failures and server-side errors.
    fn is_retriable(&self) -> bool {
        match self {
            GatewayError::Unreachable { .. } | GatewayError::Timeout { .. } => true,
            GatewayError::BackendStatus { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }

    /// True when the backend itself is gone rather than one request being
    /// bad; orchestrators checkpoint and exit resumably on these.
    pub fn is_backend_exhaustion(&self) -> bool {
        matches!(
            self,
            GatewayError::Unreachable { .. } | GatewayError::Timeout { .. }
        ) || matches!(self, GatewayError::BackendStatus { status, .. } if *status >= 500)
    }

    fn with_attempts(mut self, total: u32) -> Self {
        match &mut self {
            GatewayError::Unreachable { attempts, .. }
            | GatewayError::Timeout { attempts }
            | GatewayError::BackendStatus { attempts, .. } => *attempts = total,
            _ => {}
        }
        self
    }
}

/// What a backend must provide: a greedy completion and, where supported,
/// next-token log-probabilities or single-token sampling.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;

    fn supports_logprobs(&self) -> bool {
        true
    }

    /// Log-probability of each candidate as the single next token of
    /// `prompt`. Candidates the backend cannot see may be omitted; the
    /// gateway treats them as zero mass.
    fn next_token_logprobs(
        &self,
        prompt: &str,
        candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, GatewayError>;

    /// One temperature-1 sample of the next token, for backends without
    /// log-probability support.
    fn sample_next_token(&self, _prompt: &str) -> Result<String, GatewayError> {
        Err(GatewayError::MissingCapability)
    }
}

/// Static shape checks for score candidate surfaces, run at startup; the
/// backend wire layer reports `multi_token_candidate` for surfaces its
/// tokenizer splits.
pub fn validate_candidate_surface(candidate: &str) -> Result<(), GatewayError> {
    let reason = if candidate.is_empty() {
        Some("empty surface".to_string())
    } else if candidate.contains(['\n', '\r']) {
        Some("contains a line break".to_string())
    } else if candidate.trim_start().chars().any(char::is_whitespace) {
        // A leading space is a real tokenizer surface; any other
        // whitespace means more than one token.
        Some("whitespace after the first non-space character".to_string())
    } else if candidate.chars().count() > 8 {
        Some("longer than 8 scalars; unlikely to be a single token".to_string())
    } else {
        None
    };
    match reason {
        Some(reason) => Err(GatewayError::InvalidCandidate {
            candidate: candidate.to_string(),
            reason,
        }),
        None => Ok(()),
    }
}

/// Retry, rate-limit, and concurrency wrapper around a [`Backend`].
/// Shareable across worker threads; the limits are enforced process-wide
/// per gateway instance.
pub struct Gateway {
    backend: Box<dyn Backend>,
    semaphore: Semaphore,
    bucket: Option<Mutex<TokenBucket>>,
    max_retries: u32,
    backoff_initial: Duration,
    backoff_max: Duration,
    sample_count: u32,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, cfg: &BackendConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(Self {
            backend,
            semaphore: Semaphore::new(cfg.max_concurrency),
            bucket: cfg
                .requests_per_minute
                .map(|rpm| Mutex::new(TokenBucket::new(rpm))),
            max_retries: cfg.max_retries,
            backoff_initial: Duration::from_millis(cfg.backoff_initial_ms),
            backoff_max: Duration::from_millis(cfg.backoff_max_ms),
            sample_count: cfg.sample_count,
        })
    }

    fn wait_for_rate_slot(&self) {
        if let Some(bucket) = &self.bucket {
            loop {
                let wait = bucket.lock().unwrap().try_take(Instant::now());
                match wait {
                    None => return,
                    Some(d) => std::thread::sleep(d),
                }
            }
        }
    }

    /// Run one backend call under the limits, retrying transient failures
    /// with capped exponential backoff. Total attempts never exceed
    /// max_retries + 1.
    fn with_limits<T>(
        &self,
        op: impl Fn() -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        let mut delay = self.backoff_initial;
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            self.wait_for_rate_slot();
            let result = {
                let _permit = self.semaphore.acquire();
                op()
            };
            match result {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retriable() && attempts <= self.max_retries => {
                    std::thread::sleep(delay);
                    delay = (delay * 2).min(self.backoff_max);
                }
                Err(e) => return Err(e.with_attempts(attempts)),
            }
        }
    }

    /// Greedy completion, truncated at the first stop sequence.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        if request.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let text = self.with_limits(|| self.backend.complete(request))?;
        Ok(truncate_at_stop(&text, &request.stop_sequences))
    }

    /// Raw probability mass for each candidate as the immediate next token
    /// of `prompt`. Masses come from exp(logprob) where the backend
    /// reports log-probabilities, or from empirical sample frequencies
    /// otherwise; they need not sum to 1 over the candidate set.
    pub fn next_token_masses(
        &self,
        prompt: &str,
        candidates: &[String],
    ) -> Result<(BTreeMap<String, f64>, EstimationMode), GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        for candidate in candidates {
            validate_candidate_surface(candidate)?;
        }

        if self.backend.supports_logprobs() {
            let logprobs =
                self.with_limits(|| self.backend.next_token_logprobs(prompt, candidates))?;
            let mut masses = BTreeMap::new();
            for candidate in candidates {
                let mass = match logprobs.get(candidate) {
                    None => 0.0,
                    Some(lp) if lp.is_nan() => {
                        return Err(GatewayError::WireFormat(format!(
                            "log-probability for {candidate:?} is NaN"
                        )))
                    }
                    Some(lp) if *lp > 0.0 => {
                        return Err(GatewayError::WireFormat(format!(
                            "log-probability for {candidate:?} is positive ({lp})"
                        )))
                    }
                    Some(lp) => lp.exp(),
                };
                masses.insert(candidate.clone(), mass);
            }
            Ok((masses, EstimationMode::Logprob))
        } else {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for _ in 0..self.sample_count {
                let token = self.with_limits(|| self.backend.sample_next_token(prompt))?;
                *counts.entry(token).or_insert(0) += 1;
            }
            let masses = candidates
                .iter()
                .map(|c| {
                    let count = counts.get(c).copied().unwrap_or(0);
                    (c.clone(), count as f64 / self.sample_count as f64)
                })
                .collect();
            Ok((masses, EstimationMode::Sampled))
        }
    }
}

fn truncate_at_stop(text: &str, stop_sequences: &[String]) -> String {
    let cut = stop_sequences
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min();
    match cut {
        Some(i) => text[..i].to_string(),
        None => text.to_string(),
    }
}
