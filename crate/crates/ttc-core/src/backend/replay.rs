//! Replay of pre-scored generation logs: a pure cursor over per-query streams,
//! standing in for live sampling when experiments run offline.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::backend::{Backend, BackendError, Batch};
use crate::config::ReplayExhaustedPolicy;
use crate::state::{GenerationResult, QueryId};

/// One JSONL record. `correct` is optional: logs scored by a learned model
/// often carry no ground truth.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayLine {
    query_id: String,
    gen_index: u64,
    answer_key: String,
    reward: f64,
    #[serde(default)]
    correct: Option<bool>,
}

/// A parsed log: per-query ordered streams of results. Queries are indexed in
/// first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayLog {
    queries: Vec<QueryId>,
    streams: Vec<Vec<GenerationResult>>,
}

impl ReplayLog {
    /// Parses JSON Lines: one object per generation, `gen_index` contiguous
    /// from 0 within each query, interleaving across queries allowed.
    pub fn from_jsonl_str(text: &str) -> Result<Self, ReplayError> {
        let mut queries: Vec<QueryId> = Vec::new();
        let mut streams: Vec<Vec<GenerationResult>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ReplayLine = serde_json::from_str(line)
                .map_err(|source| ReplayError::Parse { lineno, source })?;
            if !(parsed.reward >= 0.0 && parsed.reward <= 1.0) {
                return Err(ReplayError::RewardOutOfRange {
                    lineno,
                    query: parsed.query_id,
                    reward: parsed.reward,
                });
            }
            let idx = match queries.iter().position(|q| q.id == parsed.query_id) {
                Some(idx) => idx,
                None => {
                    queries.push(QueryId::new(parsed.query_id.clone(), queries.len()));
                    streams.push(Vec::new());
                    queries.len() - 1
                }
            };
            let expected = streams[idx].len() as u64;
            if parsed.gen_index != expected {
                return Err(ReplayError::GenIndexNotContiguous {
                    lineno,
                    query: parsed.query_id,
                    expected,
                    actual: parsed.gen_index,
                });
            }
            streams[idx].push(GenerationResult {
                answer_key: parsed.answer_key,
                reward: parsed.reward,
                correct: parsed.correct,
                gen_index: parsed.gen_index,
            });
        }
        if queries.is_empty() {
            return Err(ReplayError::EmptyLog);
        }
        Ok(Self { queries, streams })
    }

    pub fn from_path(path: &Path) -> Result<Self, ReplayError> {
        let text = fs::read_to_string(path).map_err(|source| ReplayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_str(&text)
    }

    /// The query set, in first-appearance order (which defines indices).
    pub fn queries(&self) -> &[QueryId] {
        &self.queries
    }

    pub fn stream(&self, index: usize) -> &[GenerationResult] {
        &self.streams[index]
    }

    /// All logged results, in query-index then gen-index order.
    pub fn all_results(&self) -> impl Iterator<Item = &GenerationResult> {
        self.streams.iter().flatten()
    }

    pub fn total_generations(&self) -> u64 {
        self.streams.iter().map(|s| s.len() as u64).sum()
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("failed to read replay log {path}")]
    Io { path: String, source: std::io::Error },
    #[error("line {lineno}: not a valid replay record: {source}")]
    Parse { lineno: usize, source: serde_json::Error },
    #[error("line {lineno}: reward {reward} outside [0, 1] for query {query}")]
    RewardOutOfRange { lineno: usize, query: String, reward: f64 },
    #[error(
        "line {lineno}: gen_index {actual} for query {query} breaks contiguity (expected {expected})"
    )]
    GenIndexNotContiguous { lineno: usize, query: String, expected: u64, actual: u64 },
    #[error("replay log contains no records")]
    EmptyLog,
}

/// Backend that serves a parsed log from per-query cursors.
pub struct ReplayBackend {
    log: ReplayLog,
    cursors: Vec<usize>,
    policy: ReplayExhaustedPolicy,
}

impl ReplayBackend {
    pub fn new(log: ReplayLog, policy: ReplayExhaustedPolicy) -> Self {
        let n = log.queries().len();
        Self { log, cursors: vec![0; n], policy }
    }

    pub fn log(&self) -> &ReplayLog {
        &self.log
    }
}

impl Backend for ReplayBackend {
    fn generate_batch(&mut self, query: &QueryId, k: u64) -> Result<Batch, BackendError> {
        let i = query.index;
        if i >= self.log.queries().len() || self.log.queries()[i].id != query.id {
            return Err(BackendError::UnknownQuery { query: query.id.clone() });
        }
        let stream = self.log.stream(i);
        let available = stream.len() - self.cursors[i];
        let (take, exhausted) = if (k as usize) <= available {
            (k as usize, false)
        } else {
            match self.policy {
                ReplayExhaustedPolicy::Error => {
                    return Err(BackendError::ReplayExhausted {
                        query: query.id.clone(),
                        requested: k,
                        available: available as u64,
                    });
                }
                ReplayExhaustedPolicy::Cap => (available, true),
            }
        };
        let results = stream[self.cursors[i]..self.cursors[i] + take].to_vec();
        self.cursors[i] += take;
        Ok(Batch { results, exhausted })
    }
}
