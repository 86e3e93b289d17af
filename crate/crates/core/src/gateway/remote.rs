//! HTTP wire client for the gateway.
//!
//! The native contract is two POST endpoints:
//!
//! - `/v1/complete` with `{"prompt": str, "max_tokens": int, "stop": [str]}`
//!   returning `{"text": str}`
//! - `/v1/next_token_logprobs` with `{"prompt": str, "candidates": [str]}`
//!   returning `{"logprobs": {candidate: float}}`
//!
//! The credential, when configured, is sent as a bearer token read from
//! the environment variable named in [`BackendConfig`]. Third-party API
//! shapes are mapped through [`WireConfig::Custom`]: request bodies are
//! JSON templates with `${PROMPT}`, `${MAX_TOKENS}`, `${STOP}`, and
//! `${CANDIDATES}` placeholders, and responses are read through JSON
//! pointers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendConfig, CompletionRequest, GatewayError};

/// One adapted endpoint: where to POST, the body template, and the JSON
/// pointer locating the interesting part of the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCall {
    pub path: String,
    pub body: Value,
    pub pointer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WireConfig {
    /// The toolkit's own JSON-over-HTTP contract.
    Native,
    /// Adapter for a third-party API shape. Without a `logprobs` call the
    /// gateway falls back to sampled mass estimation through `sample`,
    /// which should be configured as a temperature-1 single-token request.
    Custom {
        complete: WireCall,
        #[serde(default)]
        logprobs: Option<WireCall>,
        #[serde(default)]
        sample: Option<WireCall>,
    },
}

/// Error code a server may use to reject a candidate its tokenizer splits
/// into multiple tokens; surfaced as a configuration error.
pub const MULTI_TOKEN_CANDIDATE: &str = "multi_token_candidate";

struct Substitutions<'a> {
    prompt: &'a str,
    max_tokens: Option<u32>,
    stop: Option<&'a [String]>,
    candidates: Option<&'a [String]>,
}

fn substitute(template: &Value, subst: &Substitutions) -> Value {
    match template {
        Value::String(s) => match s.as_str() {
            "${MAX_TOKENS}" => match subst.max_tokens {
                Some(n) => json!(n),
                None => template.clone(),
            },
            "${STOP}" => match subst.stop {
                Some(stop) => json!(stop),
                None => template.clone(),
            },
            "${CANDIDATES}" => match subst.candidates {
                Some(c) => json!(c),
                None => template.clone(),
            },
            _ => Value::String(s.replace("${PROMPT}", subst.prompt)),
        },
        Value::Array(items) => Value::Array(items.iter().map(|v| substitute(v, subst)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), substitute(v, subst)))
                .collect(),
        ),
        other => other.clone(),
    }
}

pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth_token: Option<String>,
    wire: WireConfig,
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        if cfg.endpoint.is_empty() {
            return Err(GatewayError::Config("endpoint must be set".into()));
        }
        let auth_token = match &cfg.auth_token_env {
            None => None,
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("credential variable {var} is not set"))
            })?),
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: cfg.endpoint.trim_end_matches('/').to_string(),
            auth_token,
            wire: cfg.wire.clone(),
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}{}", self.endpoint, path);
        let mut request = self.client.post(&url).json(body);
        if let Some(token) = &self.auth_token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout { attempts: 1 }
            } else {
                GatewayError::Unreachable {
                    attempts: 1,
                    message: e.to_string(),
                }
            }
        })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| GatewayError::Unreachable {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !(200..300).contains(&status) {
            if text.contains(MULTI_TOKEN_CANDIDATE) {
                return Err(GatewayError::InvalidCandidate {
                    candidate: String::new(),
                    reason: format!("backend reports {MULTI_TOKEN_CANDIDATE}: {text}"),
                });
            }
            return Err(GatewayError::BackendStatus {
                status,
                attempts: 1,
                message: text,
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::WireFormat(format!("invalid JSON from {url}: {e}")))
    }

    fn extract<'v>(value: &'v Value, pointer: &str, url_hint: &str) -> Result<&'v Value, GatewayError> {
        value.pointer(pointer).ok_or_else(|| {
            GatewayError::WireFormat(format!("missing {pointer:?} in response from {url_hint}"))
        })
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let (path, body, pointer) = match &self.wire {
            WireConfig::Native => (
                "/v1/complete",
                json!({
                    "prompt": request.prompt,
                    "max_tokens": request.max_tokens,
                    "stop": request.stop_sequences,
                }),
                "/text".to_string(),
            ),
            WireConfig::Custom { complete, .. } => (
                complete.path.as_str(),
                substitute(
                    &complete.body,
                    &Substitutions {
                        prompt: &request.prompt,
                        max_tokens: Some(request.max_tokens),
                        stop: Some(&request.stop_sequences),
                        candidates: None,
                    },
                ),
                complete.pointer.clone(),
            ),
        };
        let response = self.post(path, &body)?;
        let text = Self::extract(&response, &pointer, path)?;
        text.as_str()
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::WireFormat(format!("{pointer:?} is not a string")))
    }

    fn supports_logprobs(&self) -> bool {
        match &self.wire {
            WireConfig::Native => true,
            WireConfig::Custom { logprobs, .. } => logprobs.is_some(),
        }
    }

    fn next_token_logprobs(
        &self,
        prompt: &str,
        candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, GatewayError> {
        let (path, body, pointer) = match &self.wire {
            WireConfig::Native => (
                "/v1/next_token_logprobs",
                json!({ "prompt": prompt, "candidates": candidates }),
                "/logprobs".to_string(),
            ),
            WireConfig::Custom { logprobs, .. } => {
                let call = logprobs.as_ref().ok_or(GatewayError::MissingCapability)?;
                (
                    call.path.as_str(),
                    substitute(
                        &call.body,
                        &Substitutions {
                            prompt,
                            max_tokens: None,
                            stop: None,
                            candidates: Some(candidates),
                        },
                    ),
                    call.pointer.clone(),
                )
            }
        };
        let response = self.post(path, &body)?;
        let map = Self::extract(&response, &pointer, path)?
            .as_object()
            .ok_or_else(|| GatewayError::WireFormat(format!("{pointer:?} is not an object")))?;
        map.iter()
            .map(|(k, v)| {
                v.as_f64()
                    .map(|f| (k.clone(), f))
                    .ok_or_else(|| GatewayError::WireFormat(format!("logprob for {k:?} is not a number")))
            })
            .collect()
    }

    fn sample_next_token(&self, prompt: &str) -> Result<String, GatewayError> {
        let WireConfig::Custom { sample: Some(call), .. } = &self.wire else {
            return Err(GatewayError::MissingCapability);
        };
        let body = substitute(
            &call.body,
            &Substitutions {
                prompt,
                max_tokens: Some(1),
                stop: None,
                candidates: None,
            },
        );
        let response = self.post(&call.path, &body)?;
        Self::extract(&response, &call.pointer, &call.path)?
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::WireFormat(format!("{:?} is not a string", call.pointer)))
    }
}
