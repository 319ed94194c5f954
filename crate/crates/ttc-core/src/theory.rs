//! Closed-form budget bounds for the synthetic Bernoulli model, plus a
//! Monte-Carlo estimator that checks the adaptive loop against them.
//!
//! Each query x has per-generation success probability Δ(x). An adaptive
//! rule that stops sampling a query at its first success pays a Geometric
//! number of generations per query, so "solve everything" costs Σ 1/Δ(x) in
//! expectation. A union-bound version with per-query failure share δ̄ = δ/n
//! needs (1/Δ(x))·ln(1/δ̄) generations per query. The uniform baseline must
//! give every query the budget the hardest one needs, which is where its
//! inefficiency comes from.

use thiserror::Error;

use crate::allocator::{run_allocation, AllocError};
use crate::backend::synthetic::{substream_seed, SyntheticBackend, SyntheticInstance};
use crate::config::{AllocConfig, Rule};
use crate::oracle::OracleKind;

/// The largest per-query generation count the uniform scan will consider.
pub const UNIFORM_SCAN_CUTOFF: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("no per-query success probabilities given")]
    EmptyDeltas,
    #[error("success probability {delta} at position {index} is outside (0, 1]")]
    DeltaOutOfRange { index: usize, delta: f64 },
    #[error("failure probability {0} is outside (0, 1)")]
    ConfidenceOutOfRange(f64),
    #[error("uniform allocation needs more than {cutoff} generations per query to reach the requested confidence")]
    ScanCutoffExceeded { cutoff: u64 },
    #[error("at least one Monte-Carlo trial is required")]
    NoTrials,
    #[error("rule {0} never certifies a query as solved, so time-to-solve is unbounded")]
    RuleNeverSolves(Rule),
    #[error("allocation failed during a Monte-Carlo trial: {0}")]
    Alloc(String),
}

impl From<AllocError> for TheoryError {
    fn from(e: AllocError) -> Self {
        TheoryError::Alloc(e.to_string())
    }
}

fn check_delta(index: usize, delta: f64) -> Result<(), TheoryError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(TheoryError::DeltaOutOfRange { index, delta });
    }
    Ok(())
}

fn check_deltas(deltas: &[f64]) -> Result<(), TheoryError> {
    if deltas.is_empty() {
        return Err(TheoryError::EmptyDeltas);
    }
    for (i, &d) in deltas.iter().enumerate() {
        check_delta(i, d)?;
    }
    Ok(())
}

fn check_confidence(delta: f64) -> Result<(), TheoryError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::ConfidenceOutOfRange(delta));
    }
    Ok(())
}

/// Generations one query with success probability `delta_x` needs so that
/// the chance of never seeing a success stays below `dbar`:
/// `(1/Δ)·ln(1/δ̄)`.
pub fn per_query_sample_bound(delta_x: f64, dbar: f64) -> Result<f64, TheoryError> {
    check_delta(0, delta_x)?;
    check_confidence(dbar)?;
    Ok((1.0 / delta_x) * (1.0 / dbar).ln())
}

/// Total budget sufficient for an adaptive rule to solve every query with
/// probability ≥ 1 − δ: each query gets the per-query bound at failure share
/// δ̄ = δ/n, and the total is the sum.
pub fn adaptive_closed_form(deltas: &[f64], delta: f64) -> Result<f64, TheoryError> {
    check_deltas(deltas)?;
    check_confidence(delta)?;
    let dbar = delta / deltas.len() as f64;
    Ok(deltas
        .iter()
        .map(|&d| (1.0 / d) * (1.0 / dbar).ln())
        .sum())
}

/// Smallest total budget the uniform baseline needs to solve every query
/// with probability ≥ 1 − δ.
///
/// Scans per-query counts m = 1, 2, … and returns `n·m*` for the first m
/// where `Π_x (1 − (1 − Δ(x))^m) ≥ 1 − δ`, accumulating the product in log
/// space. Errors with [`TheoryError::ScanCutoffExceeded`] past
/// [`UNIFORM_SCAN_CUTOFF`].
pub fn uniform_required_budget(deltas: &[f64], delta: f64) -> Result<u64, TheoryError> {
    check_deltas(deltas)?;
    check_confidence(delta)?;
    let target = (1.0 - delta).ln();
    // fail[i] after the m-th step holds (1 − Δᵢ)^m.
    let mut fail: Vec<f64> = deltas.iter().map(|&d| 1.0 - d).collect();
    let mut m = 1u64;
    loop {
        let log_solve_all: f64 = fail.iter().map(|&f| (-f).ln_1p()).sum();
        if log_solve_all >= target {
            return Ok(deltas.len() as u64 * m);
        }
        if m >= UNIFORM_SCAN_CUTOFF {
            return Err(TheoryError::ScanCutoffExceeded { cutoff: UNIFORM_SCAN_CUTOFF });
        }
        for (f, &d) in fail.iter_mut().zip(deltas) {
            *f *= 1.0 - d;
        }
        m += 1;
    }
}

/// Lower bound on the probability that a query with success probability
/// `delta_x` sees no success in `1/Δ` generations: `e^(−1/(1−Δ))`. Spending
/// only the expected number of generations per query therefore fails with
/// at-least-constant probability, which is why the closed-form budget carries
/// the log factor.
pub fn failure_lower_bound(delta_x: f64) -> Result<f64, TheoryError> {
    check_delta(0, delta_x)?;
    let bound = (-1.0 / (1.0 - delta_x)).exp();
    // The exact miss probability always sits at or above the bound; a cheap
    // self-check guards against the formula regressing.
    let exact = (1.0 - delta_x).powf(1.0 / delta_x);
    assert!(
        exact >= bound - 1e-12,
        "(1-Δ)^(1/Δ) = {exact} fell below its lower bound {bound} at Δ = {delta_x}"
    );
    Ok(bound)
}

/// Monte-Carlo estimate of the budget an adaptive rule spends to solve every
/// query (sample mean, sample standard deviation, trial count).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stddev: f64,
    pub trials: u64,
}

fn mc_spends(deltas: &[f64], rule: Rule, trials: u64, seed: u64) -> Result<Vec<f64>, TheoryError> {
    check_deltas(deltas)?;
    if trials == 0 {
        return Err(TheoryError::NoTrials);
    }
    if rule == Rule::Uniform {
        return Err(TheoryError::RuleNeverSolves(rule));
    }
    let mut spends = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let instance = SyntheticInstance::from_deltas(deltas)
            .expect("deltas validated above");
        let queries = instance.queries().to_vec();
        let mut backend = SyntheticBackend::new(instance, substream_seed(seed, trial));
        let mut config = AllocConfig::new(rule, u64::MAX, seed);
        config.lambda = rule.default_lambda();
        let outcome =
            run_allocation(&queries, &mut backend, &OracleKind::ground_truth(), &config)?;
        spends.push(outcome.ledger.spent as f64);
    }
    Ok(spends)
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Runs `trials` independent synthetic instances (trial t uses the seed
/// substream `substream_seed(seed, t)`) with an effectively unlimited budget
/// and measures the spend at the moment the last query is eliminated.
pub fn monte_carlo_budget_to_solve_all(
    deltas: &[f64],
    rule: Rule,
    trials: u64,
    seed: u64,
) -> Result<McEstimate, TheoryError> {
    let spends = mc_spends(deltas, rule, trials, seed)?;
    let (mean, stddev) = mean_and_std(&spends);
    Ok(McEstimate { mean, stddev, trials })
}

/// Closed-form and empirical budget figures for one instance, side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetBounds {
    /// Σ (1/Δ(x))·ln(n/δ): sufficient adaptive budget at confidence 1 − δ.
    pub adaptive_closed_form: f64,
    /// Smallest uniform budget reaching the same confidence.
    pub uniform_required: u64,
    /// Monte-Carlo mean adaptive spend to solve every query.
    pub mc_adaptive_mean: f64,
    /// Sample standard deviation of the spends behind `mc_adaptive_mean`.
    pub mc_adaptive_stddev: f64,
    /// Fraction of trials whose spend stayed within `adaptive_closed_form`.
    pub mc_success_rate: f64,
}

/// Computes every bound for one delta profile, sharing a single set of
/// Monte-Carlo trials.
pub fn budget_bounds(
    deltas: &[f64],
    delta: f64,
    rule: Rule,
    trials: u64,
    seed: u64,
) -> Result<BudgetBounds, TheoryError> {
    let closed_form = adaptive_closed_form(deltas, delta)?;
    let uniform = uniform_required_budget(deltas, delta)?;
    let spends = mc_spends(deltas, rule, trials, seed)?;
    let (mean, stddev) = mean_and_std(&spends);
    let within = spends.iter().filter(|&&s| s <= closed_form).count();
    Ok(BudgetBounds {
        adaptive_closed_form: closed_form,
        uniform_required: uniform,
        mc_adaptive_mean: mean,
        mc_adaptive_stddev: stddev,
        mc_success_rate: within as f64 / spends.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_query_bound_hand_value() {
        // (1/0.5)·ln(100) = 2·ln(100).
        let b = per_query_sample_bound(0.5, 0.01).unwrap();
        assert!((b - 2.0 * 100.0f64.ln()).abs() < 1e-12);
        assert!(per_query_sample_bound(0.0, 0.01).is_err());
        assert!(per_query_sample_bound(0.5, 1.0).is_err());
    }

    #[test]
    fn closed_form_sums_per_query_bounds() {
        // Two queries at Δ = 0.5, δ = 0.1 → δ̄ = 0.05 → 2 · 2·ln(20).
        let total = adaptive_closed_form(&[0.5, 0.5], 0.1).unwrap();
        assert!((total - 4.0 * 20.0f64.ln()).abs() < 1e-12);
        assert_eq!(adaptive_closed_form(&[], 0.1), Err(TheoryError::EmptyDeltas));
    }

    #[test]
    fn uniform_scan_small_grid() {
        // (1 − 0.5^m)² ≥ 0.9 first holds at m = 5 → total 10.
        assert_eq!(uniform_required_budget(&[0.5, 0.5], 0.1).unwrap(), 10);
        // Certain queries succeed on the first generation.
        assert_eq!(uniform_required_budget(&[1.0, 1.0], 0.5).unwrap(), 2);
    }

    #[test]
    fn uniform_scan_reports_cutoff() {
        assert_eq!(
            uniform_required_budget(&[1e-9], 0.1),
            Err(TheoryError::ScanCutoffExceeded { cutoff: UNIFORM_SCAN_CUTOFF })
        );
    }

    #[test]
    fn failure_bound_values_and_inequality() {
        let b = failure_lower_bound(0.5).unwrap();
        assert!((b - (-2.0f64).exp()).abs() < 1e-15);
        // The self-check inside must hold across the whole range.
        for i in 1..100 {
            failure_lower_bound(i as f64 / 100.0).unwrap();
        }
        assert_eq!(failure_lower_bound(1.0).unwrap(), 0.0);
        assert!(failure_lower_bound(0.0).is_err());
    }

    #[test]
    fn certain_queries_cost_exactly_one_each() {
        let est = monte_carlo_budget_to_solve_all(&[1.0, 1.0], Rule::Elimination, 10, 0).unwrap();
        assert_eq!(est.mean, 2.0);
        assert_eq!(est.stddev, 0.0);
        assert_eq!(est.trials, 10);
    }

    #[test]
    fn geometric_mean_matches_monte_carlo() {
        // Spend for one Δ = 0.5 query is Geometric: mean 2, variance 2.
        // 10⁴ trials put the sample mean within 3σ ≈ 0.042 of 2.
        let est = monte_carlo_budget_to_solve_all(&[0.5], Rule::Elimination, 10_000, 42).unwrap();
        assert!(
            (est.mean - 2.0).abs() < 0.06,
            "sample mean {} too far from 2.0",
            est.mean
        );
        assert!((est.stddev - 2.0f64.sqrt()).abs() < 0.1);
    }

    #[test]
    fn mixed_grid_matches_sum_of_inverse_deltas() {
        // Σ 1/Δ = 4 + 2 + 4/3 + 1 = 25/3; Var of the total is ≈ 14.44, so
        // 4000 trials give σ_mean ≈ 0.06.
        let deltas = [0.25, 0.5, 0.75, 1.0];
        let est =
            monte_carlo_budget_to_solve_all(&deltas, Rule::Elimination, 4_000, 11).unwrap();
        assert!(
            (est.mean - 25.0 / 3.0).abs() < 0.25,
            "sample mean {} too far from 25/3",
            est.mean
        );
    }

    #[test]
    fn single_selection_rules_also_solve_everything() {
        for rule in [Rule::Ucb, Rule::Gap, Rule::Entropy] {
            let est = monte_carlo_budget_to_solve_all(&[0.5, 1.0], rule, 200, 3).unwrap();
            // Both queries must be driven to elimination in every trial.
            assert!(est.mean >= 2.0);
        }
    }

    #[test]
    fn monte_carlo_rejects_bad_inputs() {
        assert_eq!(
            monte_carlo_budget_to_solve_all(&[0.5], Rule::Uniform, 10, 0),
            Err(TheoryError::RuleNeverSolves(Rule::Uniform))
        );
        assert_eq!(
            monte_carlo_budget_to_solve_all(&[0.5], Rule::Elimination, 0, 0),
            Err(TheoryError::NoTrials)
        );
        assert!(matches!(
            monte_carlo_budget_to_solve_all(&[0.0], Rule::Elimination, 10, 0),
            Err(TheoryError::DeltaOutOfRange { .. })
        ));
    }

    #[test]
    fn monte_carlo_is_deterministic_in_the_seed() {
        let a = monte_carlo_budget_to_solve_all(&[0.3, 0.7], Rule::Elimination, 50, 9).unwrap();
        let b = monte_carlo_budget_to_solve_all(&[0.3, 0.7], Rule::Elimination, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_budget_to_solve_all(&[0.3, 0.7], Rule::Elimination, 50, 10).unwrap();
        assert!(a.mean != c.mean || a.stddev != c.stddev, "different seeds should differ");
    }

    #[test]
    fn budget_bounds_ties_the_pieces_together() {
        let bounds = budget_bounds(&[0.5, 0.5], 0.1, Rule::Elimination, 500, 7).unwrap();
        assert!((bounds.adaptive_closed_form - 4.0 * 20.0f64.ln()).abs() < 1e-12);
        assert_eq!(bounds.uniform_required, 10);
        // Mean spend is ≈ 4; the closed form (≈ 12) should cover nearly all
        // trials.
        assert!((bounds.mc_adaptive_mean - 4.0).abs() < 0.5);
        assert!(bounds.mc_success_rate >= 0.95);
    }
}
