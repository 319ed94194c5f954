//! Seeded Bernoulli generation model: each generation for a query succeeds
//! independently with probability Δx; failures draw a wrong-or-invalid answer
//! key so that response-distribution entropy carries signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

use crate::backend::{Backend, BackendError, Batch};
use crate::state::{GenerationResult, QueryId};

/// Answer key emitted on success.
pub const CORRECT_KEY: &str = "CORRECT";
/// Answer key for degenerate failures (empty, truncated, unparseable output).
pub const INVALID_KEY: &str = "INVALID";

/// Failure-and-success model for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryModel {
    /// Δx: per-generation success probability. 0 models an unsolvable query.
    pub delta: f64,
    /// Probability that a failed generation is the invalid key rather than a
    /// concrete wrong answer. High values concentrate failures on one key,
    /// lowering response entropy.
    pub invalid_prob: f64,
    /// W: number of distinct wrong answers.
    pub wrong_answer_vocab: u64,
    /// Zipf exponent over wrong answers; 0 is uniform, larger skews toward
    /// low-numbered keys.
    pub wrong_answer_skew: f64,
}

impl QueryModel {
    /// A solvability-only model: failures all map to distinct-ish wrong
    /// answers drawn from a mildly skewed vocabulary.
    pub fn with_delta(delta: f64) -> Self {
        Self { delta, invalid_prob: 0.0, wrong_answer_vocab: 100, wrong_answer_skew: 1.0 }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        if !(self.delta >= 0.0 && self.delta <= 1.0) {
            return Err(SyntheticError::InvalidDelta { value: self.delta });
        }
        if !(self.invalid_prob >= 0.0 && self.invalid_prob <= 1.0) {
            return Err(SyntheticError::InvalidInvalidProb { value: self.invalid_prob });
        }
        if self.wrong_answer_vocab == 0 {
            return Err(SyntheticError::EmptyWrongAnswerVocab);
        }
        if !(self.wrong_answer_skew >= 0.0 && self.wrong_answer_skew.is_finite()) {
            return Err(SyntheticError::InvalidSkew { value: self.wrong_answer_skew });
        }
        Ok(())
    }
}

/// A full synthetic instance: the query set plus one model per query.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    queries: Vec<QueryId>,
    models: Vec<QueryModel>,
}

impl SyntheticInstance {
    pub fn new(queries: Vec<QueryId>, models: Vec<QueryModel>) -> Result<Self, SyntheticError> {
        if queries.len() != models.len() {
            return Err(SyntheticError::LengthMismatch {
                queries: queries.len(),
                models: models.len(),
            });
        }
        for (i, q) in queries.iter().enumerate() {
            if q.index != i {
                return Err(SyntheticError::BadQueryIndex { id: q.id.clone(), index: q.index });
            }
        }
        for m in &models {
            m.validate()?;
        }
        Ok(Self { queries, models })
    }

    /// Builds an instance from success probabilities alone, with query ids
    /// `q0, q1, ...` and the default failure model.
    pub fn from_deltas(deltas: &[f64]) -> Result<Self, SyntheticError> {
        let queries =
            (0..deltas.len()).map(|i| QueryId::new(format!("q{i}"), i)).collect::<Vec<_>>();
        let models = deltas.iter().map(|&d| QueryModel::with_delta(d)).collect();
        Self::new(queries, models)
    }

    pub fn queries(&self) -> &[QueryId] {
        &self.queries
    }

    pub fn models(&self) -> &[QueryModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("delta must lie in [0, 1], got {value}")]
    InvalidDelta { value: f64 },
    #[error("invalid_prob must lie in [0, 1], got {value}")]
    InvalidInvalidProb { value: f64 },
    #[error("wrong_answer_vocab must be >= 1")]
    EmptyWrongAnswerVocab,
    #[error("wrong_answer_skew must be finite and >= 0, got {value}")]
    InvalidSkew { value: f64 },
    #[error("{queries} queries but {models} models")]
    LengthMismatch { queries: usize, models: usize },
    #[error("query {id} carries index {index}, expected its position in the set")]
    BadQueryIndex { id: String, index: usize },
}

/// Derives the seed for one query's (or one trial's) private random stream
/// from a root seed. SplitMix64-style finalizer, so streams for consecutive
/// indices are uncorrelated and a stream depends only on (root, index) — not
/// on the order in which other streams are consumed.
pub fn substream_seed(root_seed: u64, index: u64) -> u64 {
    let mut z = root_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Synthetic backend over per-query ChaCha8 substreams.
///
/// Each query owns an independent generator seeded by
/// `substream_seed(root_seed, query.index)`, so its sample path is a function
/// of how many generations it has received — identical across rules,
/// allocation orders, and batch sizes (coupled randomness).
pub struct SyntheticBackend {
    instance: SyntheticInstance,
    root_seed: u64,
    rngs: Vec<Option<ChaCha8Rng>>,
    next_gen_index: Vec<u64>,
}

impl SyntheticBackend {
    pub fn new(instance: SyntheticInstance, root_seed: u64) -> Self {
        let n = instance.len();
        Self { instance, root_seed, rngs: vec![None; n], next_gen_index: vec![0; n] }
    }

    pub fn instance(&self) -> &SyntheticInstance {
        &self.instance
    }

    fn draw(model: &QueryModel, rng: &mut ChaCha8Rng, gen_index: u64) -> GenerationResult {
        if rng.random_bool(model.delta) {
            return GenerationResult {
                answer_key: CORRECT_KEY.to_string(),
                reward: 1.0,
                correct: Some(true),
                gen_index,
            };
        }
        let answer_key = if rng.random_bool(model.invalid_prob) {
            INVALID_KEY.to_string()
        } else {
            let zipf = Zipf::new(model.wrong_answer_vocab as f64, model.wrong_answer_skew)
                .expect("vocab >= 1 and skew >= 0 are validated at construction");
            let j = zipf.sample(rng) as u64;
            format!("WRONG_{j}")
        };
        GenerationResult { answer_key, reward: 0.0, correct: Some(false), gen_index }
    }
}

impl Backend for SyntheticBackend {
    fn generate_batch(&mut self, query: &QueryId, k: u64) -> Result<Batch, BackendError> {
        let i = query.index;
        if i >= self.instance.len() || self.instance.queries()[i].id != query.id {
            return Err(BackendError::UnknownQuery { query: query.id.clone() });
        }
        let rng = self.rngs[i].get_or_insert_with(|| {
            ChaCha8Rng::seed_from_u64(substream_seed(self.root_seed, i as u64))
        });
        let model = &self.instance.models()[i];
        let mut results = Vec::with_capacity(k as usize);
        for _ in 0..k {
            let gen_index = self.next_gen_index[i];
            results.push(Self::draw(model, rng, gen_index));
            self.next_gen_index[i] += 1;
        }
        Ok(Batch::full(results))
    }
}
