//! Set-level performance metrics and budget-efficiency comparisons.
//!
//! Coverage asks "for what fraction of queries did at least one correct
//! response appear?"; accuracy asks "for what fraction is the single
//! highest-reward response correct?". Efficiency gain converts two
//! budget-performance curves into "the baseline needs G× the budget to match
//! the adaptive rule here".

use thiserror::Error;

use crate::state::QueryState;

/// One point on a budget-performance curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfPoint {
    pub budget: u64,
    pub coverage: f64,
    pub accuracy: f64,
}

/// Which metric a comparison reads off a [`PerfPoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSelector {
    Coverage,
    Accuracy,
}

impl MetricSelector {
    pub fn of(self, point: &PerfPoint) -> f64 {
        match self {
            MetricSelector::Coverage => point.coverage,
            MetricSelector::Accuracy => point.accuracy,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no query states to score")]
    EmptyStates,
    #[error("coverage undefined: {missing} of {total} queries have responses with no correctness bit and no correct response")]
    CoverageUnavailable { missing: usize, total: usize },
    #[error("accuracy undefined: {missing} of {total} queries have a best response with no correctness bit")]
    AccuracyUnavailable { missing: usize, total: usize },
    #[error("budget-performance curve must have strictly increasing budgets")]
    BudgetsNotIncreasing,
    #[error("budget-performance curve must be nondecreasing in the metric")]
    MetricDecreasing,
    #[error("curve is empty")]
    EmptyCurve,
    #[error("budget {at_budget} lies outside the adaptive curve's range [{lo}, {hi}]")]
    BudgetOutOfRange { at_budget: u64, lo: u64, hi: u64 },
}

/// Fraction of queries with at least one correct response. Queries with zero
/// generations count as uncovered; a query whose responses all lack
/// correctness bits (with none marked correct) makes the metric undefined.
pub fn coverage(states: &[QueryState]) -> Result<f64, MetricsError> {
    if states.is_empty() {
        return Err(MetricsError::EmptyStates);
    }
    let mut covered = 0usize;
    let mut missing = 0usize;
    for s in states {
        match s.has_correct_response() {
            Some(true) => covered += 1,
            Some(false) => {}
            None => missing += 1,
        }
    }
    if missing > 0 {
        return Err(MetricsError::CoverageUnavailable { missing, total: states.len() });
    }
    Ok(covered as f64 / states.len() as f64)
}

/// Fraction of queries whose highest-reward response is correct (earliest
/// response wins reward ties). Zero-generation queries count as incorrect.
pub fn accuracy(states: &[QueryState]) -> Result<f64, MetricsError> {
    if states.is_empty() {
        return Err(MetricsError::EmptyStates);
    }
    let mut correct = 0usize;
    let mut missing = 0usize;
    for s in states {
        match s.best_is_correct() {
            Some(true) => correct += 1,
            Some(false) => {}
            None => missing += 1,
        }
    }
    if missing > 0 {
        return Err(MetricsError::AccuracyUnavailable { missing, total: states.len() });
    }
    Ok(correct as f64 / states.len() as f64)
}

/// Outcome of an efficiency comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gain {
    /// The baseline matches the adaptive value at `ratio ×` the budget.
    Ratio(f64),
    /// The baseline never reaches the adaptive value on its curve.
    Unattained,
}

fn validate_curve(curve: &[PerfPoint], metric: MetricSelector) -> Result<(), MetricsError> {
    if curve.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    for pair in curve.windows(2) {
        if pair[1].budget <= pair[0].budget {
            return Err(MetricsError::BudgetsNotIncreasing);
        }
        if metric.of(&pair[1]) < metric.of(&pair[0]) {
            return Err(MetricsError::MetricDecreasing);
        }
    }
    Ok(())
}

/// Linear interpolation of `metric` on `curve` at `budget`.
fn interpolate(curve: &[PerfPoint], metric: MetricSelector, budget: f64) -> f64 {
    debug_assert!(!curve.is_empty());
    if budget <= curve[0].budget as f64 {
        return metric.of(&curve[0]);
    }
    for pair in curve.windows(2) {
        let (b0, b1) = (pair[0].budget as f64, pair[1].budget as f64);
        if budget <= b1 {
            let t = (budget - b0) / (b1 - b0);
            return metric.of(&pair[0]) + t * (metric.of(&pair[1]) - metric.of(&pair[0]));
        }
    }
    metric.of(curve.last().unwrap())
}

/// How many times the adaptive rule's budget the baseline needs to match the
/// adaptive metric value at `at_budget`.
///
/// Reads the adaptive curve at `at_budget` (exact point or linear
/// interpolation between neighbors), then finds the smallest baseline budget
/// whose interpolated metric reaches that value. Returns
/// [`Gain::Unattained`] when the baseline curve tops out below the target
/// value. Both curves must have strictly increasing budgets and nondecreasing
/// metric values; `at_budget` must lie within the adaptive curve's budget
/// range.
pub fn efficiency_gain(
    adaptive: &[PerfPoint],
    baseline: &[PerfPoint],
    at_budget: u64,
    metric: MetricSelector,
) -> Result<Gain, MetricsError> {
    validate_curve(adaptive, metric)?;
    validate_curve(baseline, metric)?;
    let (lo, hi) = (adaptive[0].budget, adaptive.last().unwrap().budget);
    if at_budget < lo || at_budget > hi {
        return Err(MetricsError::BudgetOutOfRange { at_budget, lo, hi });
    }
    let target = interpolate(adaptive, metric, at_budget as f64);

    // Smallest baseline budget reaching the target value.
    if metric.of(&baseline[0]) >= target {
        return Ok(Gain::Ratio(baseline[0].budget as f64 / at_budget as f64));
    }
    for pair in baseline.windows(2) {
        let (v0, v1) = (metric.of(&pair[0]), metric.of(&pair[1]));
        if v1 >= target {
            // v0 < target <= v1 on this segment; v1 > v0 follows.
            let t = (target - v0) / (v1 - v0);
            let b = pair[0].budget as f64 + t * (pair[1].budget as f64 - pair[0].budget as f64);
            return Ok(Gain::Ratio(b / at_budget as f64));
        }
    }
    Ok(Gain::Unattained)
}

/// Mean and half the sample standard deviation (the conventional shading
/// half-width for seed plots). `half_std` is 0 for a single value; `None`
/// for an empty slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub half_std: f64,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let half_std = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        0.5 * var.sqrt()
    };
    Some(Aggregate { mean, half_std })
}

/// `(adaptive − baseline) / baseline`; `None` when the baseline is zero.
pub fn relative_improvement(adaptive: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (adaptive - baseline) / baseline)
}
