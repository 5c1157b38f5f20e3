//! Text-generation clients.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

/// Anything that turns a rendered prompt into text.
pub trait TextGenClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, PipelineError>;
}

/// Stable fixture key: lowercase hex SHA-256 of the rendered prompt.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

pub const FIXTURE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub v: u32,
    pub key: String,
    /// Short human-readable label; not used for lookup.
    pub label: String,
    pub response: String,
}

/// Canned responses keyed by [`prompt_key`].
#[derive(Clone, Debug, Default)]
pub struct FixtureClient {
    responses: HashMap<String, String>,
}

const BUNDLED: &str = include_str!("../../data/fixtures.jsonl");

impl FixtureClient {
    pub fn from_reader(input: impl BufRead) -> Result<Self, PipelineError> {
        let mut responses = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| PipelineError::Fixture {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(&line).map_err(|e| PipelineError::Fixture {
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.v != FIXTURE_SCHEMA_VERSION {
                return Err(PipelineError::Fixture {
                    line: i + 1,
                    message: format!("unsupported schema version {}", rec.v),
                });
            }
            responses.insert(rec.key, rec.response);
        }
        Ok(FixtureClient { responses })
    }

    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let f = std::fs::File::open(path).map_err(|e| PipelineError::Fixture {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        FixtureClient::from_reader(std::io::BufReader::new(f))
    }

    /// The fixture corpus shipped with the crate.
    pub fn bundled() -> Self {
        FixtureClient::from_reader(BUNDLED.as_bytes()).expect("bundled fixtures are well-formed")
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(prompt_key(prompt), response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl TextGenClient for FixtureClient {
    fn complete(&self, prompt: &str) -> Result<String, PipelineError> {
        let key = prompt_key(prompt);
        self.responses
            .get(&key)
            .cloned()
            .ok_or(PipelineError::MissingFixture { key })
    }
}

#[cfg(feature = "http")]
pub use http::HttpClient;

#[cfg(feature = "http")]
mod http {
    use super::*;

    pub const ENDPOINT_VAR: &str = "SCENFORGE_LLM_ENDPOINT";
    pub const KEY_VAR: &str = "SCENFORGE_LLM_KEY";

    /// POSTs `{"prompt": ...}` and reads `{"text": ...}` back.
    #[derive(Debug)]
    pub struct HttpClient {
        endpoint: String,
        key: Option<String>,
        http: reqwest::blocking::Client,
    }

    #[derive(Deserialize)]
    struct Reply {
        text: String,
    }

    impl HttpClient {
        pub fn from_env() -> Result<Self, PipelineError> {
            let endpoint =
                std::env::var(ENDPOINT_VAR).map_err(|_| PipelineError::Client(format!("{ENDPOINT_VAR} is not set")))?;
            Ok(HttpClient {
                endpoint,
                key: std::env::var(KEY_VAR).ok(),
                http: reqwest::blocking::Client::new(),
            })
        }
    }

    impl TextGenClient for HttpClient {
        fn complete(&self, prompt: &str) -> Result<String, PipelineError> {
            let mut req = self
                .http
                .post(&self.endpoint)
                .json(&serde_json::json!({ "prompt": prompt }));
            if let Some(k) = &self.key {
                req = req.bearer_auth(k);
            }
            let reply: Reply = req
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.json())
                .map_err(|e| PipelineError::Client(e.to_string()))?;
            Ok(reply.text)
        }
    }
}
