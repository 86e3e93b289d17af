//! Deterministic backend replaying canned responses keyed by a SHA-256
//! digest of the exact prompt text. Fixture files are newline-delimited
//! JSON: `{"prompt_sha256": hex, "response": str}` for completions, or
//! `{"prompt_sha256": hex, "response": {"logprobs": {surface: float}}}`
//! for next-token queries.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, CompletionRequest, GatewayError};

/// One fixture line on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedFixture {
    pub prompt_sha256: String,
    pub response: FixtureResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureResponse {
    Completion(String),
    Logprobs { logprobs: BTreeMap<String, f64> },
}

impl FixtureResponse {
    fn kind(&self) -> &'static str {
        match self {
            FixtureResponse::Completion(_) => "completion",
            FixtureResponse::Logprobs { .. } => "logprobs",
        }
    }
}

/// Hex SHA-256 of the exact prompt text; the fixture key.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Convenience constructors for building fixture files in tests and
/// golden pipelines.
impl ScriptedFixture {
    pub fn completion(prompt: &str, text: &str) -> Self {
        Self {
            prompt_sha256: prompt_digest(prompt),
            response: FixtureResponse::Completion(text.to_string()),
        }
    }

    pub fn logprobs<I: IntoIterator<Item = (String, f64)>>(prompt: &str, entries: I) -> Self {
        Self {
            prompt_sha256: prompt_digest(prompt),
            response: FixtureResponse::Logprobs {
                logprobs: entries.into_iter().collect(),
            },
        }
    }
}

/// Write fixtures as newline-delimited JSON.
pub fn write_fixtures(path: &Path, fixtures: &[ScriptedFixture]) -> Result<(), GatewayError> {
    let mut out = String::new();
    for fixture in fixtures {
        out.push_str(&serde_json::to_string(fixture).expect("fixture serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
}

pub struct ScriptedBackend {
    fixtures: HashMap<String, FixtureResponse>,
}

impl ScriptedBackend {
    pub fn new(fixtures: impl IntoIterator<Item = ScriptedFixture>) -> Self {
        Self {
            fixtures: fixtures
                .into_iter()
                .map(|f| (f.prompt_sha256, f.response))
                .collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut fixtures = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fixture: ScriptedFixture = serde_json::from_str(line).map_err(|e| {
                GatewayError::Config(format!("{}: line {}: {e}", path.display(), i + 1))
            })?;
            fixtures.push(fixture);
        }
        Ok(Self::new(fixtures))
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    fn lookup(&self, prompt: &str) -> Result<(&FixtureResponse, String), GatewayError> {
        let digest = prompt_digest(prompt);
        match self.fixtures.get(&digest) {
            Some(response) => Ok((response, digest)),
            None => Err(GatewayError::UnknownFixture { digest }),
        }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let (response, digest) = self.lookup(&request.prompt)?;
        match response {
            FixtureResponse::Completion(text) => Ok(text.clone()),
            other => Err(GatewayError::FixtureKind {
                digest,
                expected: "completion",
                actual: other.kind(),
            }),
        }
    }

    fn next_token_logprobs(
        &self,
        prompt: &str,
        _candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, GatewayError> {
        let (response, digest) = self.lookup(prompt)?;
        match response {
            FixtureResponse::Logprobs { logprobs } => Ok(logprobs.clone()),
            other => Err(GatewayError::FixtureKind {
                digest,
                expected: "logprobs",
                actual: other.kind(),
            }),
        }
    }
}
