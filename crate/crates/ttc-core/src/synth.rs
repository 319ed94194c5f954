//! Grouped synthetic populations for allocation-behavior experiments: build
//! a query set out of labeled difficulty groups, run a rule over it, and
//! report where the budget actually went, group by group.

use std::collections::HashSet;

use thiserror::Error;

use crate::allocator::{run_allocation, AllocError, RunOutcome};
use crate::backend::synthetic::{
    QueryModel, SyntheticBackend, SyntheticError, SyntheticInstance,
};
use crate::config::AllocConfig;
use crate::config::Rule;
use crate::oracle::OracleKind;
use crate::state::QueryId;

/// One homogeneous slice of a population: `count` queries that all share the
/// same response model.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub label: String,
    pub count: usize,
    pub delta: f64,
    pub invalid_prob: f64,
    pub wrong_answer_vocab: u64,
    pub wrong_answer_skew: f64,
}

impl GroupSpec {
    /// A group with the default failure model (all-distinct wrong answers
    /// disabled off; vocabulary 100, mild skew, no invalid responses).
    pub fn new(label: impl Into<String>, count: usize, delta: f64) -> Self {
        let model = QueryModel::with_delta(delta);
        Self {
            label: label.into(),
            count,
            delta,
            invalid_prob: model.invalid_prob,
            wrong_answer_vocab: model.wrong_answer_vocab,
            wrong_answer_skew: model.wrong_answer_skew,
        }
    }

    fn model(&self) -> QueryModel {
        QueryModel {
            delta: self.delta,
            invalid_prob: self.invalid_prob,
            wrong_answer_vocab: self.wrong_answer_vocab,
            wrong_answer_skew: self.wrong_answer_skew,
        }
    }
}

/// A full population: groups laid out in order, plus the per-query budget
/// multiplier that turns n queries into a total budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub groups: Vec<GroupSpec>,
    pub avg_budget: u64,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("population has no groups")]
    NoGroups,
    #[error("group {label} has zero queries")]
    EmptyGroup { label: String },
    #[error("group label {label} is invalid: labels are nonempty and use only [A-Za-z0-9_-]")]
    BadLabel { label: String },
    #[error("duplicate group label {label}")]
    DuplicateLabel { label: String },
    #[error(transparent)]
    Model(#[from] SyntheticError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

fn label_ok(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl PopulationSpec {
    pub fn new(groups: Vec<GroupSpec>, avg_budget: u64) -> Self {
        Self { groups, avg_budget }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.groups.is_empty() {
            return Err(SynthError::NoGroups);
        }
        let mut seen = HashSet::new();
        for g in &self.groups {
            if !label_ok(&g.label) {
                return Err(SynthError::BadLabel { label: g.label.clone() });
            }
            if g.count == 0 {
                return Err(SynthError::EmptyGroup { label: g.label.clone() });
            }
            if !seen.insert(g.label.as_str()) {
                return Err(SynthError::DuplicateLabel { label: g.label.clone() });
            }
            g.model().validate()?;
        }
        Ok(())
    }

    /// Total number of queries across groups.
    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// `avg_budget × n`: the total generation budget this population implies.
    pub fn total_budget(&self) -> u64 {
        self.avg_budget * self.n() as u64
    }

    /// Materializes the population: query ids `{label}-{j}` in group order,
    /// the synthetic instance behind them, and each query's group index.
    pub fn build(&self) -> Result<(Vec<QueryId>, SyntheticInstance, Vec<usize>), SynthError> {
        self.validate()?;
        let mut queries = Vec::with_capacity(self.n());
        let mut models = Vec::with_capacity(self.n());
        let mut group_of = Vec::with_capacity(self.n());
        for (gi, g) in self.groups.iter().enumerate() {
            for j in 0..g.count {
                let index = queries.len();
                queries.push(QueryId::new(format!("{}-{}", g.label, j), index));
                models.push(g.model());
                group_of.push(gi);
            }
        }
        let instance = SyntheticInstance::new(queries.clone(), models)?;
        Ok((queries, instance, group_of))
    }
}

/// Where one group's budget landed in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub label: String,
    /// Mean generations per query in the group.
    pub mean_allocation: f64,
    /// Fraction of the group's queries that received strictly more than the
    /// population-wide average budget.
    pub frac_above_avg: f64,
}

/// Folds a per-query spend vector into per-group statistics.
pub fn group_stats_from_ledger(
    per_query: &[u64],
    group_of: &[usize],
    labels: &[String],
    avg_budget: u64,
) -> Vec<GroupStats> {
    let mut totals = vec![0u64; labels.len()];
    let mut above = vec![0usize; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    for (i, &spent) in per_query.iter().enumerate() {
        let g = group_of[i];
        totals[g] += spent;
        counts[g] += 1;
        if spent > avg_budget {
            above[g] += 1;
        }
    }
    labels
        .iter()
        .enumerate()
        .map(|(g, label)| GroupStats {
            label: label.clone(),
            mean_allocation: totals[g] as f64 / counts[g] as f64,
            frac_above_avg: above[g] as f64 / counts[g] as f64,
        })
        .collect()
}

/// Group statistics for every seed, plus the across-seed mean per group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAllocationReport {
    /// `per_seed[s][g]`: stats for group g under seed `seeds[s]`.
    pub per_seed: Vec<Vec<GroupStats>>,
    /// Stats averaged across seeds, one entry per group.
    pub mean: Vec<GroupStats>,
    pub seeds: Vec<u64>,
}

/// Runs `rule` over the population once per seed and reports how the budget
/// distributed over groups. `base` supplies K, γ, λ, and the generation cap;
/// its rule, budget, and seed are overridden per run. Generations are judged
/// by the ground-truth oracle.
pub fn group_allocation_report(
    population: &PopulationSpec,
    rule: Rule,
    base: &AllocConfig,
    seeds: &[u64],
) -> Result<GroupAllocationReport, SynthError> {
    let (queries, instance, group_of) = population.build()?;
    let labels: Vec<String> = population.groups.iter().map(|g| g.label.clone()).collect();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let outcome = run_population(population, &queries, &instance, rule, base, seed)?;
        per_seed.push(group_stats_from_ledger(
            &outcome.ledger.per_query,
            &group_of,
            &labels,
            population.avg_budget,
        ));
    }
    let mean = labels
        .iter()
        .enumerate()
        .map(|(g, label)| {
            let k = per_seed.len() as f64;
            GroupStats {
                label: label.clone(),
                mean_allocation: per_seed.iter().map(|s| s[g].mean_allocation).sum::<f64>() / k,
                frac_above_avg: per_seed.iter().map(|s| s[g].frac_above_avg).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(GroupAllocationReport { per_seed, mean, seeds: seeds.to_vec() })
}

/// One run of `rule` over an already-built population at one seed.
pub fn run_population(
    population: &PopulationSpec,
    queries: &[QueryId],
    instance: &SyntheticInstance,
    rule: Rule,
    base: &AllocConfig,
    seed: u64,
) -> Result<RunOutcome, SynthError> {
    let mut config = base.clone();
    config.rule = rule;
    config.total_budget = population.total_budget();
    config.seed = seed;
    let mut backend = SyntheticBackend::new(instance.clone(), seed);
    Ok(run_allocation(queries, &mut backend, &OracleKind::ground_truth(), &config)?)
}
