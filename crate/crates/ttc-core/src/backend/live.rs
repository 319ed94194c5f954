//! Live generation through an OpenAI-compatible chat-completions endpoint.
//!
//! The client only moves text: callers must supply a scoring hook that turns
//! raw completions into scored results, because reward semantics (exact-match
//! checking, learned scorers) live outside this crate. Transport failures are
//! surfaced with retry metadata; the backend never retries on its own, so the
//! harness stays in charge of pacing.

use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::backend::{Backend, BackendError, Batch};
use crate::state::{GenerationResult, QueryId};

/// Environment variables the endpoint configuration is read from.
pub const ENV_API_BASE: &str = "TTC_API_BASE";
pub const ENV_API_KEY: &str = "TTC_API_KEY";
pub const ENV_MODEL: &str = "TTC_MODEL";

/// Default sampling temperature for live generation.
pub const DEFAULT_TEMPERATURE: f64 = 0.6;

/// Endpoint configuration.
#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Base URL up to (not including) `/chat/completions`.
    pub api_base: String,
    pub api_key: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
}

impl LiveConfig {
    pub fn new(api_base: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            api_base: api_base.into(),
            api_key: api_key.into(),
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `TTC_API_BASE`, `TTC_API_KEY`, and `TTC_MODEL`.
    pub fn from_env() -> Result<Self, LiveError> {
        let get = |name: &'static str| {
            std::env::var(name).map_err(|_| LiveError::MissingEnv { name })
        };
        Ok(Self::new(get(ENV_API_BASE)?, get(ENV_API_KEY)?, get(ENV_MODEL)?))
    }
}

/// A completion scored by the caller's hook.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub answer_key: String,
    pub reward: f64,
    pub correct: Option<bool>,
}

/// Hook turning one raw completion into a scored response.
pub type ScoreFn = Box<dyn FnMut(&QueryId, &str) -> ScoredResponse + Send>;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("environment variable {name} is not set")]
    MissingEnv { name: &'static str },
    #[error("transport failure talking to {url}: {detail}")]
    Transport { url: String, detail: String, retriable: bool },
    #[error("endpoint returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String, retriable: bool, retry_after: Option<Duration> },
    #[error("endpoint response was not a chat completion: {detail}")]
    MalformedResponse { detail: String },
}

impl LiveError {
    /// Whether the harness may retry the request later.
    pub fn retriable(&self) -> bool {
        match self {
            LiveError::Transport { retriable, .. } | LiveError::Http { retriable, .. } => {
                *retriable
            }
            LiveError::MissingEnv { .. } | LiveError::MalformedResponse { .. } => false,
        }
    }

    /// Server-suggested backoff, when it sent one.
    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            LiveError::Http { retry_after, .. } => *retry_after,
            _ => None,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// Requests `k` completions for one prompt, in request order.
///
/// A single request asks for `n = k` choices; servers that return fewer are
/// topped up with follow-up requests. Errors carry retry metadata and leave no
/// state behind — the caller decides whether and when to retry.
pub fn live_generate(
    config: &LiveConfig,
    client: &reqwest::blocking::Client,
    query_text: &str,
    k: u64,
) -> Result<Vec<String>, LiveError> {
    let url = format!("{}/chat/completions", config.api_base.trim_end_matches('/'));
    let mut completions: Vec<String> = Vec::with_capacity(k as usize);
    while (completions.len() as u64) < k {
        let want = k - completions.len() as u64;
        let body = serde_json::json!({
            "model": config.model,
            "messages": [{"role": "user", "content": query_text}],
            "n": want,
            "temperature": config.temperature,
        });
        let response = client
            .post(&url)
            .bearer_auth(&config.api_key)
            .json(&body)
            .send()
            .map_err(|e| LiveError::Transport {
                url: url.clone(),
                detail: e.to_string(),
                retriable: true,
            })?;

        let status = response.status();
        if !status.is_success() {
            let retry_after = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let detail = response.text().unwrap_or_default();
            return Err(LiveError::Http {
                status: status.as_u16(),
                detail: detail.chars().take(200).collect(),
                retriable: status.as_u16() == 429 || status.is_server_error(),
                retry_after,
            });
        }

        let parsed: ChatResponse = response
            .json()
            .map_err(|e| LiveError::MalformedResponse { detail: e.to_string() })?;
        if parsed.choices.is_empty() {
            return Err(LiveError::MalformedResponse {
                detail: "response contained no choices".to_string(),
            });
        }
        for choice in parsed.choices {
            completions.push(choice.message.content);
            if completions.len() as u64 == k {
                break;
            }
        }
    }
    Ok(completions)
}

/// Backend that samples completions live and scores them with the caller's
/// hook. Construction requires the hook, so a missing scorer is unrepresentable
/// rather than a runtime surprise.
pub struct LiveBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
    prompts: Vec<(QueryId, String)>,
    scorer: ScoreFn,
    next_gen_index: Vec<u64>,
}

impl LiveBackend {
    pub fn new(
        config: LiveConfig,
        prompts: Vec<(QueryId, String)>,
        scorer: ScoreFn,
    ) -> Result<Self, LiveError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LiveError::Transport {
                url: config.api_base.clone(),
                detail: e.to_string(),
                retriable: false,
            })?;
        let n = prompts.len();
        Ok(Self { config, client, prompts, scorer, next_gen_index: vec![0; n] })
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryId> {
        self.prompts.iter().map(|(q, _)| q)
    }
}

impl Backend for LiveBackend {
    fn generate_batch(&mut self, query: &QueryId, k: u64) -> Result<Batch, BackendError> {
        let i = query.index;
        if i >= self.prompts.len() || self.prompts[i].0.id != query.id {
            return Err(BackendError::UnknownQuery { query: query.id.clone() });
        }
        let completions = live_generate(&self.config, &self.client, &self.prompts[i].1, k)?;
        let mut results = Vec::with_capacity(completions.len());
        for text in completions {
            let scored = (self.scorer)(query, &text);
            if !(scored.reward >= 0.0 && scored.reward <= 1.0) {
                return Err(BackendError::ScoreOutOfRange {
                    query: query.id.clone(),
                    reward: scored.reward,
                });
            }
            let gen_index = self.next_gen_index[i];
            self.next_gen_index[i] += 1;
            results.push(GenerationResult {
                answer_key: scored.answer_key,
                reward: scored.reward,
                correct: scored.correct,
                gen_index,
            });
        }
        Ok(Batch::full(results))
    }
}
