//! The sequential allocation loop: an exploration rule decides which query
//! receives the next block of generations, elimination retires answered
//! queries, and every applied generation appends one trace row.

use std::collections::HashSet;

use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::config::{AllocConfig, ConfigError, Rule};
use crate::oracle::{OracleError, OracleKind, OracleMode};
use crate::state::{
    BudgetLedger, GenerationResult, QueryId, QueryState, QueryStatus, RunTrace, StateError,
    TraceRow,
};

/// A rule's opinion of one query. `score` may be `±∞`: cold-start queries
/// (N = 0) outrank every warm query under each single-selection rule, so no
/// index comparison happens before every query has at least one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionScore {
    pub query: QueryId,
    pub score: f64,
    pub rule: Rule,
}

/// Optimism in the face of uncertainty: `r̂(x) + λ·N(x)^(-1/2)`, selected by
/// argmax. `+∞` when N = 0.
pub fn ucb_score(state: &QueryState, lambda: f64) -> f64 {
    match state.empirical_mean_reward() {
        None => f64::INFINITY,
        Some(mean) => mean + lambda / (state.n_generations as f64).sqrt(),
    }
}

/// Distance to the elimination threshold shrunk by visits:
/// `(γ − r̂(x))·N(x)^(-1/2)`, selected by argmin. `−∞` when N = 0.
pub fn gap_score(state: &QueryState, gamma: f64) -> f64 {
    match state.empirical_mean_reward() {
        None => f64::NEG_INFINITY,
        Some(mean) => (gamma - mean) / (state.n_generations as f64).sqrt(),
    }
}

/// Response-distribution entropy plus exploration bonus:
/// `H(x) + λ·N(x)^(-1/2)` with `H(x) = −Σ p_k ln p_k` (natural log), selected
/// by argmax. `+∞` when N = 0. Scattered responses signal a query still worth
/// sampling; repeated ones signal either an easy query or a degenerate
/// failure mode.
pub fn entropy_score(state: &QueryState, lambda: f64) -> f64 {
    if state.n_generations == 0 {
        return f64::INFINITY;
    }
    let n = state.n_generations as f64;
    // Only observed keys are in the histogram, so every p is positive and the
    // 0·ln 0 = 0 convention never needs evaluating.
    let entropy = -state
        .answer_counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>();
    entropy + lambda / n.sqrt()
}

/// Scores one query under a single-selection rule.
pub fn selection_score(state: &QueryState, config: &AllocConfig) -> Result<SelectionScore, AllocError> {
    let score = match config.rule {
        Rule::Ucb => ucb_score(state, config.lambda),
        Rule::Gap => gap_score(state, config.gamma),
        Rule::Entropy => entropy_score(state, config.lambda),
        rule => return Err(AllocError::RuleNotSingleSelection(rule)),
    };
    Ok(SelectionScore { query: state.query.clone(), score, rule: config.rule })
}

/// Picks the next query for a single-selection rule: argmax of the rule's
/// score (argmin for Gap) over queries that are active and below the
/// generation cap. Ties break to the smallest query index.
pub fn select_next(states: &[QueryState], config: &AllocConfig) -> Result<usize, AllocError> {
    if !config.rule.is_single_selection() {
        return Err(AllocError::RuleNotSingleSelection(config.rule));
    }
    let argmin = config.rule == Rule::Gap;
    let mut best: Option<(usize, f64)> = None;
    for (i, state) in states.iter().enumerate() {
        if state.status != QueryStatus::Active {
            continue;
        }
        if let Some(cap) = config.max_samples {
            if state.n_generations >= cap {
                continue;
            }
        }
        let score = match config.rule {
            Rule::Ucb => ucb_score(state, config.lambda),
            Rule::Gap => gap_score(state, config.gamma),
            Rule::Entropy => entropy_score(state, config.lambda),
            _ => unreachable!("guarded above"),
        };
        let better = match best {
            None => true,
            Some((_, incumbent)) => {
                if argmin {
                    score < incumbent
                } else {
                    score > incumbent
                }
            }
        };
        if better {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i).ok_or(AllocError::NoEligibleQuery)
}

/// Everything a finished run hands back.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub states: Vec<QueryState>,
    pub ledger: BudgetLedger,
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("query set is empty")]
    EmptyQuerySet,
    #[error("query {id} at position {position} carries index {index}; indices must equal positions 0..n")]
    BadQueryIndex { id: String, position: usize, index: usize },
    #[error("duplicate query id {id}")]
    DuplicateQueryId { id: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("no active query below its generation cap")]
    NoEligibleQuery,
    #[error("rule {0} does not select single queries")]
    RuleNotSingleSelection(Rule),
    #[error("backend returned gen_index {actual} for query {query}, expected {expected}")]
    GenIndexMismatch { query: String, expected: u64, actual: u64 },
    #[error("backend returned {got} results for query {query}, requested {requested}")]
    BatchTooLarge { query: String, requested: u64, got: usize },
    #[error("ground-truth oracle contract violated for query {query}: {detail}")]
    OracleContract { query: String, detail: String },
}

/// Tri-state correctness knowledge for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Knowledge {
    Yes,
    No,
    Unknown,
}

/// Incremental coverage/accuracy so each trace row costs O(1), not a rescan
/// of every response list.
struct MetricsTracker {
    n: usize,
    covered: Vec<Knowledge>,
    best_correct: Vec<Knowledge>,
    covered_yes: usize,
    covered_unknown: usize,
    best_yes: usize,
    best_unknown: usize,
}

impl MetricsTracker {
    fn new(n: usize) -> Self {
        // Zero generations: not covered, and the (absent) best response
        // counts as incorrect.
        Self {
            n,
            covered: vec![Knowledge::No; n],
            best_correct: vec![Knowledge::No; n],
            covered_yes: 0,
            covered_unknown: 0,
            best_yes: 0,
            best_unknown: 0,
        }
    }

    fn shift(slot: &mut Knowledge, yes: &mut usize, unknown: &mut usize, next: Knowledge) {
        match *slot {
            Knowledge::Yes => *yes -= 1,
            Knowledge::Unknown => *unknown -= 1,
            Knowledge::No => {}
        }
        match next {
            Knowledge::Yes => *yes += 1,
            Knowledge::Unknown => *unknown += 1,
            Knowledge::No => {}
        }
        *slot = next;
    }

    fn on_result(&mut self, index: usize, correct: Option<bool>, best_updated: bool) {
        let next = match (self.covered[index], correct) {
            (Knowledge::Yes, _) => Knowledge::Yes,
            (_, Some(true)) => Knowledge::Yes,
            (current, Some(false)) => current,
            (_, None) => Knowledge::Unknown,
        };
        Self::shift(
            &mut self.covered[index],
            &mut self.covered_yes,
            &mut self.covered_unknown,
            next,
        );
        if best_updated {
            let next = match correct {
                Some(true) => Knowledge::Yes,
                Some(false) => Knowledge::No,
                None => Knowledge::Unknown,
            };
            Self::shift(
                &mut self.best_correct[index],
                &mut self.best_yes,
                &mut self.best_unknown,
                next,
            );
        }
    }

    fn coverage(&self) -> Option<f64> {
        (self.covered_unknown == 0).then(|| self.covered_yes as f64 / self.n as f64)
    }

    fn accuracy(&self) -> Option<f64> {
        (self.best_unknown == 0).then(|| self.best_yes as f64 / self.n as f64)
    }
}

/// How a per-query generation block ended.
enum BlockEnd {
    Completed,
    Eliminated,
    Exhausted,
}

struct Engine<'a> {
    states: Vec<QueryState>,
    ledger: BudgetLedger,
    trace: RunTrace,
    tracker: MetricsTracker,
    active_count: usize,
    threshold: f64,
    ground_truth: bool,
    uniform: bool,
    max_samples: Option<u64>,
    round: u64,
    backend: &'a mut dyn Backend,
}

impl Engine<'_> {
    fn cap(&mut self, index: usize) {
        if self.states[index].status == QueryStatus::Active {
            self.states[index].status = QueryStatus::Capped;
            self.active_count -= 1;
        }
    }

    fn cap_left(&self, index: usize) -> u64 {
        match self.max_samples {
            None => u64::MAX,
            Some(cap) => cap.saturating_sub(self.states[index].n_generations),
        }
    }

    fn apply_result(&mut self, index: usize, result: GenerationResult) -> Result<bool, AllocError> {
        let state = &mut self.states[index];
        if result.gen_index != state.n_generations {
            return Err(AllocError::GenIndexMismatch {
                query: state.query.id.clone(),
                expected: state.n_generations,
                actual: result.gen_index,
            });
        }
        if self.ground_truth {
            let binary = result.reward == 0.0 || result.reward == 1.0;
            let expected = Some(result.reward >= self.threshold);
            if !binary || result.correct != expected {
                return Err(AllocError::OracleContract {
                    query: state.query.id.clone(),
                    detail: format!(
                        "reward {} with correct bit {:?}; ground truth requires rewards in {{0, 1}} matching the correctness bit",
                        result.reward, result.correct
                    ),
                });
            }
        }
        let correct = result.correct;
        let recorded = if self.uniform {
            state.record_without_elimination(result)?
        } else {
            state.record_generation(result, self.threshold)?
        };
        if recorded.eliminated {
            state.eliminated_round = Some(self.round);
            self.active_count -= 1;
        } else if !self.uniform {
            if let Some(cap) = self.max_samples {
                if state.n_generations >= cap {
                    self.cap(index);
                }
            }
        }
        self.ledger.charge(index);
        self.tracker.on_result(index, correct, recorded.best_updated);
        self.trace.rows.push(TraceRow {
            round: self.round,
            spent: self.ledger.spent,
            active_count: self.active_count,
            coverage: self.tracker.coverage(),
            accuracy: self.tracker.accuracy(),
        });
        Ok(recorded.eliminated)
    }

    /// Grants up to `block` generations to one query, one at a time, stopping
    /// early on elimination or stream exhaustion. Applying results singly
    /// means a query never pays for generations after the one that answered
    /// it, and the trace has per-generation resolution.
    fn run_block(&mut self, index: usize, block: u64) -> Result<BlockEnd, AllocError> {
        for _ in 0..block {
            let query = self.states[index].query.clone();
            let batch = self.backend.generate_batch(&query, 1)?;
            if batch.results.len() > 1 {
                return Err(AllocError::BatchTooLarge {
                    query: query.id,
                    requested: 1,
                    got: batch.results.len(),
                });
            }
            let exhausted = batch.exhausted;
            if let Some(result) = batch.results.into_iter().next() {
                if self.apply_result(index, result)? {
                    return Ok(BlockEnd::Eliminated);
                }
            }
            if exhausted {
                self.cap(index);
                return Ok(BlockEnd::Exhausted);
            }
        }
        Ok(BlockEnd::Completed)
    }
}

/// Runs one full allocation: spends `config.total_budget` generations over
/// `queries` according to `config.rule`, returning the trace, the final
/// per-query states, and the budget ledger.
///
/// Termination: the budget is exhausted, every query is eliminated, or every
/// still-active query is at its cap (remaining budget is then left unspent).
pub fn run_allocation(
    queries: &[QueryId],
    backend: &mut dyn Backend,
    oracle: &OracleKind,
    config: &AllocConfig,
) -> Result<RunOutcome, AllocError> {
    if queries.is_empty() {
        return Err(AllocError::EmptyQuerySet);
    }
    let mut ids = HashSet::new();
    for (position, q) in queries.iter().enumerate() {
        if q.index != position {
            return Err(AllocError::BadQueryIndex {
                id: q.id.clone(),
                position,
                index: q.index,
            });
        }
        if !ids.insert(q.id.as_str()) {
            return Err(AllocError::DuplicateQueryId { id: q.id.clone() });
        }
    }
    config.validate()?;
    oracle.validate(config.gamma)?;

    let n = queries.len();
    let mut engine = Engine {
        states: queries.iter().cloned().map(QueryState::new).collect(),
        ledger: BudgetLedger::new(config.total_budget, n),
        trace: RunTrace::default(),
        tracker: MetricsTracker::new(n),
        active_count: n,
        threshold: oracle.effective_threshold(config.gamma),
        ground_truth: oracle.kind == OracleMode::GroundTruth,
        uniform: config.rule == Rule::Uniform,
        max_samples: if config.rule == Rule::Uniform { None } else { config.max_samples },
        round: 0,
        backend,
    };

    match config.rule {
        Rule::Elimination => {
            loop {
                if engine.ledger.remaining() == 0 || engine.active_count == 0 {
                    break;
                }
                let eligible: Vec<usize> = (0..n)
                    .filter(|&i| {
                        engine.states[i].status == QueryStatus::Active && engine.cap_left(i) > 0
                    })
                    .collect();
                if eligible.is_empty() {
                    // Active queries remain, but all are at their cap: stop
                    // with the rest of the budget unspent rather than lift it.
                    break;
                }
                engine.round += 1;
                for i in eligible {
                    if engine.ledger.remaining() == 0 {
                        break;
                    }
                    if engine.states[i].status != QueryStatus::Active {
                        continue;
                    }
                    let block = config
                        .k_per_step
                        .min(engine.ledger.remaining())
                        .min(engine.cap_left(i));
                    engine.run_block(i, block)?;
                }
            }
        }
        Rule::Ucb | Rule::Gap | Rule::Entropy => {
            loop {
                if engine.ledger.remaining() == 0 || engine.active_count == 0 {
                    break;
                }
                let pick = match select_next(&engine.states, config) {
                    Ok(pick) => pick,
                    Err(AllocError::NoEligibleQuery) => break,
                    Err(other) => return Err(other),
                };
                engine.round += 1;
                let block = config
                    .k_per_step
                    .min(engine.ledger.remaining())
                    .min(engine.cap_left(pick));
                engine.run_block(pick, block)?;
            }
        }
        Rule::Uniform => {
            // Exact equal split: ⌊B/n⌋ each, remainder to the lowest indices,
            // granted in K-sized steps (final partial step truncated). No
            // elimination and no cap: the baseline's spend is its definition.
            let base = config.total_budget / n as u64;
            let remainder = (config.total_budget % n as u64) as usize;
            let targets: Vec<u64> =
                (0..n).map(|i| base + u64::from(i < remainder)).collect();
            loop {
                engine.round += 1;
                let mut progressed = false;
                for (i, &target) in targets.iter().enumerate() {
                    if engine.states[i].status != QueryStatus::Active {
                        continue;
                    }
                    let left = target - engine.ledger.per_query[i];
                    if left == 0 {
                        continue;
                    }
                    let block = config.k_per_step.min(left);
                    let before = engine.ledger.per_query[i];
                    engine.run_block(i, block)?;
                    progressed |= engine.ledger.per_query[i] > before;
                }
                if !progressed {
                    break;
                }
            }
        }
    }

    Ok(RunOutcome { trace: engine.trace, states: engine.states, ledger: engine.ledger })
}
