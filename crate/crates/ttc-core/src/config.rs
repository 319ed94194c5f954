//! Run configuration: the exploration rule and the allocation loop's
//! hyperparameters.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// The policy choosing which query receives the next block of generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Round-robin over the active set, eliminating on threshold.
    Elimination,
    /// Single selection by empirical mean plus exploration bonus (argmax).
    Ucb,
    /// Single selection by threshold gap shrunk by visits (argmin).
    Gap,
    /// Single selection by response-distribution entropy plus bonus (argmax).
    Entropy,
    /// Fixed equal split of the budget; no elimination. The baseline.
    Uniform,
}

impl Rule {
    pub const ALL: [Rule; 5] =
        [Rule::Elimination, Rule::Ucb, Rule::Gap, Rule::Entropy, Rule::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Elimination => "elimination",
            Rule::Ucb => "ucb",
            Rule::Gap => "gap",
            Rule::Entropy => "entropy",
            Rule::Uniform => "uniform",
        }
    }

    /// Exploration weight used when the caller does not set one: λ=1 for UCB,
    /// λ=3 for Entropy. The other rules do not read λ.
    pub fn default_lambda(self) -> f64 {
        match self {
            Rule::Ucb => 1.0,
            Rule::Entropy => 3.0,
            Rule::Elimination | Rule::Gap | Rule::Uniform => 0.0,
        }
    }

    /// True for rules that pick one query per step via a selection score.
    pub fn is_single_selection(self) -> bool {
        matches!(self, Rule::Ucb | Rule::Gap | Rule::Entropy)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elimination" => Ok(Rule::Elimination),
            "ucb" => Ok(Rule::Ucb),
            "gap" => Ok(Rule::Gap),
            "entropy" => Ok(Rule::Entropy),
            "uniform" => Ok(Rule::Uniform),
            _ => Err(ConfigError::UnknownRule { name: s.to_string() }),
        }
    }
}

/// What to do when a replay stream cannot supply a requested generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayExhaustedPolicy {
    /// Fail the run: the log cannot support the requested allocation.
    #[default]
    Error,
    /// Return whatever the stream still holds and cap the query.
    Cap,
}

impl FromStr for ReplayExhaustedPolicy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(ReplayExhaustedPolicy::Error),
            "cap" => Ok(ReplayExhaustedPolicy::Cap),
            _ => Err(ConfigError::UnknownReplayPolicy { name: s.to_string() }),
        }
    }
}

/// All hyperparameters of one allocation run.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocConfig {
    pub rule: Rule,
    /// B: total generation allowance across all queries.
    pub total_budget: u64,
    /// K: generations granted per selection step (per query per round for
    /// round-robin rules).
    pub k_per_step: u64,
    /// γ: reward level at or above which a response answers its query.
    pub gamma: f64,
    /// λ: exploration weight for UCB and Entropy.
    pub lambda: f64,
    /// Per-query generation cap; `None` = unbounded. The uniform baseline
    /// ignores it (its per-query share is exact by definition).
    pub max_samples: Option<u64>,
    /// Root seed; per-query randomness is derived from it, not shared.
    pub seed: u64,
    pub on_replay_exhausted: ReplayExhaustedPolicy,
}

impl AllocConfig {
    /// A config with the library defaults: K=1, γ=1.0, per-rule λ, no cap.
    pub fn new(rule: Rule, total_budget: u64, seed: u64) -> Self {
        Self {
            rule,
            total_budget,
            k_per_step: 1,
            gamma: 1.0,
            lambda: rule.default_lambda(),
            max_samples: None,
            seed,
            on_replay_exhausted: ReplayExhaustedPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k_per_step == 0 {
            return Err(ConfigError::InvalidK { value: self.k_per_step });
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(ConfigError::InvalidGamma { value: self.gamma });
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ConfigError::InvalidLambda { value: self.lambda });
        }
        if self.max_samples == Some(0) {
            return Err(ConfigError::InvalidMaxSamples);
        }
        Ok(())
    }
}

/// Configuration errors, one variant per field so messages stay pointed.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown rule {name:?}; expected one of elimination, ucb, gap, entropy, uniform")]
    UnknownRule { name: String },
    #[error("unknown replay-exhausted policy {name:?}; expected error or cap")]
    UnknownReplayPolicy { name: String },
    #[error("k_per_step must be >= 1, got {value}")]
    InvalidK { value: u64 },
    #[error("gamma must lie in [0, 1], got {value}")]
    InvalidGamma { value: f64 },
    #[error("lambda must be finite and >= 0, got {value}")]
    InvalidLambda { value: f64 },
    #[error("max_samples must be >= 1 when bounded")]
    InvalidMaxSamples,
}

/// Named per-query cap schedules, keyed to the average budgets they were tuned
/// for. `exact-*` fits exact-match (0/1) scoring, `scored-*` fits learned
/// scorers whose mistakes make over-sampling a single query wasteful sooner;
/// `*-large` / `*-small` refer to the generator's scale.
pub const MAX_SAMPLES_PRESETS: [(&str, [(u64, u64); 4]); 4] = [
    ("exact-large", [(4, 40), (8, 40), (16, 120), (32, 300)]),
    ("scored-large", [(4, 12), (8, 40), (16, 80), (32, 120)]),
    ("exact-small", [(4, 40), (8, 40), (16, 120), (32, 120)]),
    ("scored-small", [(4, 12), (8, 12), (16, 60), (32, 60)]),
];

/// Looks up a preset cap for an average per-query budget; `None` when the
/// preset name or the budget is outside the table.
pub fn max_samples_preset(name: &str, avg_budget: u64) -> Option<u64> {
    MAX_SAMPLES_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(_, table)| table.iter().find(|(b, _)| *b == avg_budget))
        .map(|(_, cap)| *cap)
}
