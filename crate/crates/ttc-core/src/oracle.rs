//! Reward-oracle abstraction: the threshold correctness criterion and
//! oracle-call accounting.

use thiserror::Error;

use crate::state::{GenerationResult, RunTrace};

/// How rewards relate to correctness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Rewards are exactly 0 or 1 and a reward of 1 means correct. Under this
    /// mode a response is correct iff its reward clears any γ in (0, 1].
    GroundTruth,
    /// Rewards are real-valued scores from a learned scorer; correctness bits,
    /// when present, may disagree with the threshold criterion.
    Scored,
}

/// A reward oracle: its mode plus an optional tolerance for noisy scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleKind {
    pub kind: OracleMode,
    /// Subtracted from γ before the threshold comparison, absorbing scorer
    /// noise near the boundary. Must be 0 for ground truth.
    pub gamma_slack: f64,
}

impl OracleKind {
    pub fn ground_truth() -> Self {
        Self { kind: OracleMode::GroundTruth, gamma_slack: 0.0 }
    }

    pub fn scored(gamma_slack: f64) -> Self {
        Self { kind: OracleMode::Scored, gamma_slack }
    }

    pub fn validate(&self, gamma: f64) -> Result<(), OracleError> {
        if !(self.gamma_slack >= 0.0 && self.gamma_slack.is_finite()) {
            return Err(OracleError::InvalidSlack { value: self.gamma_slack });
        }
        if gamma - self.gamma_slack < 0.0 {
            return Err(OracleError::SlackExceedsGamma { gamma, slack: self.gamma_slack });
        }
        match self.kind {
            OracleMode::GroundTruth => {
                if self.gamma_slack != 0.0 {
                    return Err(OracleError::SlackOnGroundTruth { slack: self.gamma_slack });
                }
                // γ = 0 would deem every 0-reward (wrong) response correct.
                if gamma <= 0.0 {
                    return Err(OracleError::GammaNotPositive { gamma });
                }
            }
            OracleMode::Scored => {}
        }
        Ok(())
    }

    /// The threshold actually compared against rewards: γ − slack.
    pub fn effective_threshold(&self, gamma: f64) -> f64 {
        gamma - self.gamma_slack
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("gamma_slack must be finite and >= 0, got {value}")]
    InvalidSlack { value: f64 },
    #[error("gamma_slack {slack} exceeds gamma {gamma}; effective threshold would be negative")]
    SlackExceedsGamma { gamma: f64, slack: f64 },
    #[error("gamma_slack {slack} is meaningless for a ground-truth oracle; set it to 0")]
    SlackOnGroundTruth { slack: f64 },
    #[error("a ground-truth oracle requires gamma > 0, got {gamma}")]
    GammaNotPositive { gamma: f64 },
}

/// The correctness criterion: a response answers its query iff
/// `reward >= gamma - slack`.
pub fn exceeds_threshold(result: &GenerationResult, gamma: f64, slack: f64) -> bool {
    result.reward >= gamma - slack
}

/// Reward-oracle invocations over a run: exactly one per generation, for every
/// rule, so adaptive and uniform runs at matched spend pay the same oracle
/// cost. Equals the ledger's `spent`.
pub fn oracle_call_count(trace: &RunTrace) -> u64 {
    trace.generations()
}

/// Fraction of results whose correctness bit disagrees with the threshold
/// criterion; `None` when no result carries a bit. Useful for auditing how
/// well a scored log approximates ground truth.
pub fn disagreement_rate<'a, I>(results: I, gamma: f64, slack: f64) -> Option<f64>
where
    I: IntoIterator<Item = &'a GenerationResult>,
{
    let mut with_bits = 0u64;
    let mut disagree = 0u64;
    for r in results {
        if let Some(correct) = r.correct {
            with_bits += 1;
            if correct != exceeds_threshold(r, gamma, slack) {
                disagree += 1;
            }
        }
    }
    if with_bits == 0 {
        None
    } else {
        Some(disagree as f64 / with_bits as f64)
    }
}
