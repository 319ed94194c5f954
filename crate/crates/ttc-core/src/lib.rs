//! Strategic allocation of a generation budget across a set of queries.
//!
//! Given n queries and a total budget of B generations, the problem is to
//! decide, step by step, which query gets the next generation so that as
//! many queries as possible end up with at least one high-reward response.
//! Treating queries as arms of a pure-exploration bandit, the crate provides:
//!
//! - [`state`]: per-query bookkeeping (response lists, best-so-far,
//!   answer histograms) and the budget ledger;
//! - [`config`]: exploration rules and run configuration;
//! - [`oracle`]: how rewards are judged (exact ground truth vs. noisy
//!   scores with a threshold slack);
//! - [`backend`]: where generations come from — a synthetic Bernoulli
//!   model, a recorded JSONL log, or a live HTTP endpoint;
//! - [`allocator`]: the allocation loop itself, with round-robin
//!   elimination, UCB / gap / entropy single-selection rules, and a uniform
//!   baseline;
//! - [`metrics`]: coverage, accuracy, and budget-efficiency comparisons;
//! - [`theory`]: closed-form budget bounds for the synthetic model and a
//!   Monte-Carlo estimator to check the loop against them;
//! - [`synth`]: grouped synthetic populations for studying where each rule
//!   sends the budget.
//!
//! The short version of the loop: every query starts active; responses
//! arrive one generation at a time; a query whose response clears the reward
//! threshold γ is eliminated (it is answered — spending more on it is
//! waste); the exploration rule decides who is next. Uniform allocation
//! ignores all of this and splits B evenly, which is exactly what makes it
//! the baseline worth beating.

pub mod allocator;
pub mod backend;
pub mod config;
pub mod metrics;
pub mod oracle;
pub mod state;
pub mod synth;
pub mod theory;

pub use allocator::{
    entropy_score, gap_score, run_allocation, select_next, selection_score, ucb_score, AllocError,
    RunOutcome, SelectionScore,
};
pub use backend::replay::{ReplayBackend, ReplayError, ReplayLog};
pub use backend::synthetic::{
    substream_seed, QueryModel, SyntheticBackend, SyntheticError, SyntheticInstance,
};
pub use backend::{Backend, BackendError, Batch};
pub use config::{
    max_samples_preset, AllocConfig, ConfigError, ReplayExhaustedPolicy, Rule,
    MAX_SAMPLES_PRESETS,
};
pub use metrics::{
    accuracy, aggregate, coverage, efficiency_gain, relative_improvement, Aggregate, Gain,
    MetricSelector, MetricsError, PerfPoint,
};
pub use oracle::{
    disagreement_rate, exceeds_threshold, oracle_call_count, OracleError, OracleKind, OracleMode,
};
pub use state::{
    BudgetLedger, GenerationResult, QueryId, QueryState, QueryStatus, Recorded, RunTrace,
    StateError, TraceRow,
};
pub use synth::{
    group_allocation_report, group_stats_from_ledger, run_population, GroupAllocationReport,
    GroupSpec, GroupStats, PopulationSpec, SynthError,
};
pub use theory::{
    adaptive_closed_form, budget_bounds, failure_lower_bound, monte_carlo_budget_to_solve_all,
    per_query_sample_bound, uniform_required_budget, BudgetBounds, McEstimate, TheoryError,
};

#[cfg(feature = "live")]
pub use backend::live::{LiveBackend, LiveConfig, LiveError, ScoreFn, ScoredResponse};
