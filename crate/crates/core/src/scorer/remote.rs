use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PromptContext, Scorer, ScorerError};
use crate::world::Decision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8080/v1/score".into(),
            model: "default".into(),
            token_env: "LTLPLAN_API_TOKEN".into(),
            timeout_ms: 10_000,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    prompt: String,
    choices: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChoiceScore {
    logprob: f64,
    tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreResponse {
    choices: Vec<ChoiceScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Forward to the endpoint and store every response.
    Record,
    /// Answer only from stored responses.
    Replay,
}

/// Recorded responses keyed by the hash of the request body.
#[derive(Debug)]
pub struct Cassette {
    path: PathBuf,
    mode: CassetteMode,
    entries: Mutex<BTreeMap<String, ScoreResponse>>,
}

impl Cassette {
    pub fn open(path: impl Into<PathBuf>, mode: CassetteMode) -> std::io::Result<Cassette> {
        let path = path.into();
        let entries = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && mode == CassetteMode::Record => {
                BTreeMap::new()
            }
            Err(e) => return Err(e),
        };
        Ok(Cassette {
            path,
            mode,
            entries: Mutex::new(entries),
        })
    }

    /// Writes recorded entries back to disk.
    pub fn save(&self) -> std::io::Result<()> {
        let entries = self.entries.lock().expect("cassette lock");
        std::fs::write(
            &self.path,
            serde_json::to_string_pretty(&*entries).expect("cassette serializes"),
        )
    }

    /// Stores a response for `prompt` directly, for building fixtures.
    pub fn insert(&self, config: &RemoteConfig, prompt: &PromptContext, logprobs: &[(f64, usize)]) {
        let (key, _) = request_key(config, prompt);
        let response = ScoreResponse {
            choices: logprobs
                .iter()
                .map(|&(logprob, tokens)| ChoiceScore { logprob, tokens })
                .collect(),
        };
        self.entries
            .lock()
            .expect("cassette lock")
            .insert(key, response);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn request_key(config: &RemoteConfig, prompt: &PromptContext) -> (String, String) {
    let body = serde_json::to_string(&ScoreRequest {
        model: &config.model,
        prompt: prompt.render(),
        choices: &prompt.choices,
    })
    .expect("request serializes");
    (hex::encode(Sha256::digest(body.as_bytes())), body)
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Budget {
    free: Mutex<usize>,
    ready: Condvar,
}

impl Budget {
    fn acquire(&self) {
        let mut free = self.free.lock().expect("budget lock");
        while *free == 0 {
            free = self.ready.wait(free).expect("budget lock");
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().expect("budget lock") += 1;
        self.ready.notify_one();
    }
}

/// Client for an HTTP completion-scoring service returning per-choice
/// log-likelihoods. The raw score of a choice is its mean per-token
/// log-likelihood.
#[derive(Debug)]
pub struct RemoteScorer {
    config: RemoteConfig,
    agent: ureq::Agent,
    budget: Budget,
    cassette: Option<Cassette>,
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> RemoteScorer {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let budget = Budget {
            free: Mutex::new(config.max_in_flight.max(1)),
            ready: Condvar::new(),
        };
        RemoteScorer {
            config,
            agent,
            budget,
            cassette: None,
        }
    }

    pub fn with_cassette(mut self, cassette: Cassette) -> RemoteScorer {
        self.cassette = Some(cassette);
        self
    }

    pub fn cassette(&self) -> Option<&Cassette> {
        self.cassette.as_ref()
    }

    fn call(&self, body: &str) -> Result<ScoreResponse, ScorerError> {
        let mut request = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Ok(token) = std::env::var(&self.config.token_env) {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        self.budget.acquire();
        let result = request.send(body);
        self.budget.release();
        let mut response = result.map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ScorerError::Unavailable(format!(
                "HTTP status {}",
                status.as_u16()
            )));
        }
        response
            .body_mut()
            .read_json::<ScoreResponse>()
            .map_err(|e| ScorerError::Unavailable(format!("bad response body: {e}")))
    }
}

impl Scorer for RemoteScorer {
    fn name(&self) -> String {
        format!("remote({})", self.config.model)
    }

    fn raw_scores(
        &self,
        prompt: &PromptContext,
        decisions: &[Decision],
    ) -> Result<Vec<f64>, ScorerError> {
        let (key, body) = request_key(&self.config, prompt);
        let response = match &self.cassette {
            Some(c) if c.mode == CassetteMode::Replay => c
                .entries
                .lock()
                .expect("cassette lock")
                .get(&key)
                .cloned()
                .ok_or_else(|| ScorerError::Unavailable("request not in cassette".into()))?,
            Some(c) => {
                let r = self.call(&body)?;
                c.entries
                    .lock()
                    .expect("cassette lock")
                    .insert(key, r.clone());
                r
            }
            None => self.call(&body)?,
        };
        if response.choices.len() != decisions.len() {
            return Err(ScorerError::WrongLength {
                expected: decisions.len(),
                got: response.choices.len(),
            });
        }
        Ok(response
            .choices
            .iter()
            .map(|c| c.logprob / c.tokens.max(1) as f64)
            .collect())
    }
}
