//! Executes run/sweep cells and writes traces, the summary, and plot data.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use ttc_core::{
    accuracy, aggregate, coverage, efficiency_gain, group_stats_from_ledger, run_allocation,
    AllocConfig, Gain, GroupStats, MetricSelector, MetricsError, OracleMode, PerfPoint, QueryStatus,
    Rule,
};

use crate::config::{self, Experiment};
use crate::output::{fmt_float, fmt_opt, json_num, json_opt, write_file, write_json};
use crate::RunArgs;

/// `run` executes exactly one cell; `sweep` executes the whole grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Grid,
}

struct CellResult {
    rule: Rule,
    avg_budget: u64,
    seed: u64,
    total_budget: u64,
    spent: u64,
    rounds: u64,
    coverage: Option<f64>,
    accuracy: Option<f64>,
    eliminated: usize,
    capped: usize,
    active: usize,
    trace_file: String,
    group_stats: Option<Vec<GroupStats>>,
}

/// `Ok(v)` when the metric is defined, `None` when correctness bits are
/// missing, error otherwise.
fn opt_metric(r: Result<f64, MetricsError>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            MetricsError::CoverageUnavailable { .. } | MetricsError::AccuracyUnavailable { .. },
        ) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn run_cell(
    exp: &Experiment,
    rule: Rule,
    avg_budget: u64,
    seed: u64,
    grouping: Option<&(Vec<String>, Vec<usize>)>,
    out_dir: &Path,
) -> Result<CellResult> {
    let n = exp.backend.n_queries() as u64;
    let total_budget = avg_budget
        .checked_mul(n)
        .with_context(|| format!("avg budget {avg_budget} x {n} queries overflows"))?;
    let (queries, mut backend) = exp.backend.build(seed, exp.on_replay_exhausted)?;
    let alloc = AllocConfig {
        rule,
        total_budget,
        k_per_step: exp.k_per_step,
        gamma: exp.gamma,
        lambda: exp.lambda.unwrap_or_else(|| rule.default_lambda()),
        max_samples: exp.max_samples.resolve(avg_budget)?,
        seed,
        on_replay_exhausted: exp.on_replay_exhausted,
    };
    let outcome = run_allocation(&queries, backend.as_mut(), &exp.oracle, &alloc)
        .with_context(|| {
            format!("running {rule} at avg budget {avg_budget}, seed {seed}")
        })?;

    let mut trace = String::from("round,spent,active_count,coverage,accuracy\n");
    for row in &outcome.trace.rows {
        trace.push_str(&format!(
            "{},{},{},{},{}\n",
            row.round,
            row.spent,
            row.active_count,
            fmt_opt(row.coverage),
            fmt_opt(row.accuracy),
        ));
    }
    let trace_file = format!("trace_{}_b{}_s{}.csv", rule.name(), avg_budget, seed);
    write_file(&out_dir.join(&trace_file), &trace)?;

    let mut eliminated = 0;
    let mut capped = 0;
    let mut active = 0;
    for s in &outcome.states {
        match s.status {
            QueryStatus::Eliminated => eliminated += 1,
            QueryStatus::Capped => capped += 1,
            QueryStatus::Active => active += 1,
        }
    }
    let group_stats = grouping.map(|(labels, group_of)| {
        group_stats_from_ledger(&outcome.ledger.per_query, group_of, labels, avg_budget)
    });

    Ok(CellResult {
        rule,
        avg_budget,
        seed,
        total_budget,
        spent: outcome.ledger.spent,
        rounds: outcome.trace.rows.last().map_or(0, |r| r.round),
        coverage: opt_metric(coverage(&outcome.states))?,
        accuracy: opt_metric(accuracy(&outcome.states))?,
        eliminated,
        capped,
        active,
        trace_file,
        group_stats,
    })
}

fn fmt_human(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".to_string())
}

fn cell_json(cell: &CellResult) -> Value {
    let mut v = json!({
        "rule": cell.rule.name(),
        "avg_budget": cell.avg_budget,
        "seed": cell.seed,
        "total_budget": cell.total_budget,
        "spent": cell.spent,
        "rounds": cell.rounds,
        "coverage": json_opt(cell.coverage),
        "accuracy": json_opt(cell.accuracy),
        "eliminated": cell.eliminated,
        "capped": cell.capped,
        "active": cell.active,
        "trace_file": cell.trace_file,
    });
    if let Some(stats) = &cell.group_stats {
        v["groups"] = stats
            .iter()
            .map(|g| {
                json!({
                    "label": g.label,
                    "mean_allocation": json_num(g.mean_allocation),
                    "frac_above_avg": json_num(g.frac_above_avg),
                })
            })
            .collect();
    }
    v
}

fn aggregate_json(values: &[f64]) -> Value {
    match aggregate(values) {
        Some(a) => json!({"mean": json_num(a.mean), "half_std": json_num(a.half_std)}),
        None => Value::Null,
    }
}

/// Mean final metric per avg budget, as a budget-performance curve. `None`
/// when the metric is undefined for any contributing cell.
fn mean_curve(
    cells: &[CellResult],
    rule: Rule,
    budgets: &[u64],
    metric: MetricSelector,
) -> Option<Vec<PerfPoint>> {
    let mut curve = Vec::with_capacity(budgets.len());
    for &b in budgets {
        let mut values = Vec::new();
        let mut total_budget = 0;
        for cell in cells.iter().filter(|c| c.rule == rule && c.avg_budget == b) {
            values.push(match metric {
                MetricSelector::Coverage => cell.coverage?,
                MetricSelector::Accuracy => cell.accuracy?,
            });
            total_budget = cell.total_budget;
        }
        let mean = aggregate(&values)?.mean;
        curve.push(PerfPoint { budget: total_budget, coverage: mean, accuracy: mean });
    }
    Some(curve)
}

fn gain_json(gain: Result<Gain, MetricsError>) -> Value {
    match gain {
        Ok(Gain::Ratio(r)) => json_num(r),
        Ok(Gain::Unattained) => Value::String("unattained".to_string()),
        Err(e) => Value::String(format!("error: {e}")),
    }
}

fn efficiency_entries(exp: &Experiment, cells: &[CellResult]) -> Vec<Value> {
    let mut entries = Vec::new();
    if !exp.rules.contains(&Rule::Uniform) || exp.avg_budgets.len() < 2 {
        return entries;
    }
    let mut budgets = exp.avg_budgets.clone();
    budgets.sort_unstable();
    for metric in [MetricSelector::Coverage, MetricSelector::Accuracy] {
        let metric_name = match metric {
            MetricSelector::Coverage => "coverage",
            MetricSelector::Accuracy => "accuracy",
        };
        let Some(baseline) = mean_curve(cells, Rule::Uniform, &budgets, metric) else {
            continue;
        };
        for &rule in exp.rules.iter().filter(|&&r| r != Rule::Uniform) {
            let Some(adaptive) = mean_curve(cells, rule, &budgets, metric) else {
                continue;
            };
            for point in &adaptive {
                let gain = efficiency_gain(&adaptive, &baseline, point.budget, metric);
                entries.push(json!({
                    "rule": rule.name(),
                    "at_avg_budget": point.budget / exp.backend.n_queries() as u64,
                    "metric": metric_name,
                    "gain": gain_json(gain),
                }));
            }
        }
    }
    entries
}

fn config_json(exp: &Experiment) -> Value {
    let backend = match &exp.backend {
        config::BackendSpec::Replay { path, log } => json!({
            "kind": "replay",
            "path": path.display().to_string(),
            "n_queries": log.queries().len(),
            "total_generations": log.total_generations(),
        }),
        other => json!({
            "kind": other.kind(),
            "n_queries": other.n_queries(),
        }),
    };
    let oracle_mode = match exp.oracle.kind {
        OracleMode::GroundTruth => "ground_truth",
        OracleMode::Scored => "scored",
    };
    json!({
        "backend": backend,
        "oracle": {"mode": oracle_mode, "gamma_slack": json_num(exp.oracle.gamma_slack)},
        "rules": exp.rules.iter().map(|r| r.name()).collect::<Vec<_>>(),
        "avg_budgets": exp.avg_budgets,
        "seeds": exp.seeds,
        "k_per_step": exp.k_per_step,
        "gamma": json_num(exp.gamma),
        "lambda": json_opt(exp.lambda),
        "max_samples": exp.max_samples.describe(),
        "on_replay_exhausted": match exp.on_replay_exhausted {
            ttc_core::ReplayExhaustedPolicy::Error => "error",
            ttc_core::ReplayExhaustedPolicy::Cap => "cap",
        },
    })
}

pub fn run(args: &RunArgs, mode: Mode) -> Result<()> {
    let exp = config::load(args)?;
    let cells_planned = exp.rules.len() * exp.avg_budgets.len() * exp.seeds.len();
    if mode == Mode::Single && cells_planned > 1 {
        bail!(
            "config expands to {cells_planned} runs ({} rules x {} budgets x {} seeds); \
             narrow it with --rule/--avg-budget/--seed or use the sweep subcommand",
            exp.rules.len(),
            exp.avg_budgets.len(),
            exp.seeds.len(),
        );
    }
    let grouping = exp.backend.grouping();
    let out_dir = exp.out_dir.clone();

    let mut cells = Vec::with_capacity(cells_planned);
    for &rule in &exp.rules {
        for &avg_budget in &exp.avg_budgets {
            for &seed in &exp.seeds {
                let cell = run_cell(&exp, rule, avg_budget, seed, grouping.as_ref(), &out_dir)?;
                println!(
                    "{:<12} avg_budget={:<4} seed={:<3} spent {}/{}  coverage {}  accuracy {}  \
                     eliminated {}  capped {}  active {}",
                    cell.rule.name(),
                    cell.avg_budget,
                    cell.seed,
                    cell.spent,
                    cell.total_budget,
                    fmt_human(cell.coverage),
                    fmt_human(cell.accuracy),
                    cell.eliminated,
                    cell.capped,
                    cell.active,
                );
                cells.push(cell);
            }
        }
    }

    // Per (rule, avg budget) aggregates over seeds.
    let mut aggregates = Vec::new();
    for &rule in &exp.rules {
        for &avg_budget in &exp.avg_budgets {
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.rule == rule && c.avg_budget == avg_budget)
                .collect();
            let covs: Option<Vec<f64>> = group.iter().map(|c| c.coverage).collect();
            let accs: Option<Vec<f64>> = group.iter().map(|c| c.accuracy).collect();
            let spents: Vec<f64> = group.iter().map(|c| c.spent as f64).collect();
            aggregates.push(json!({
                "rule": rule.name(),
                "avg_budget": avg_budget,
                "seeds": group.len(),
                "coverage": covs.as_deref().map_or(Value::Null, aggregate_json),
                "accuracy": accs.as_deref().map_or(Value::Null, aggregate_json),
                "spent": aggregate_json(&spents),
            }));
        }
    }

    let summary = json!({
        "config": config_json(&exp),
        "cells": cells.iter().map(cell_json).collect::<Vec<_>>(),
        "aggregates": aggregates,
        "efficiency_gain_vs_uniform": efficiency_entries(&exp, &cells),
    });
    write_json(&out_dir.join("summary.json"), &summary)?;
    println!("wrote {}", out_dir.join("summary.json").display());

    if mode == Mode::Grid {
        let mut plot = String::from("rule,avg_budget,metric,mean,half_std\n");
        for entry in &aggregates {
            for metric in ["coverage", "accuracy"] {
                let agg = &entry[metric];
                if agg.is_null() {
                    continue;
                }
                plot.push_str(&format!(
                    "{},{},{},{},{}\n",
                    entry["rule"].as_str().unwrap(),
                    entry["avg_budget"],
                    metric,
                    agg["mean"],
                    agg["half_std"],
                ));
            }
        }
        write_file(&out_dir.join("plotdata.csv"), &plot)?;
        println!("wrote {}", out_dir.join("plotdata.csv").display());
    }

    if grouping.is_some() {
        let mut csv = String::from("rule,avg_budget,seed,group,mean_allocation,frac_above_avg\n");
        for cell in &cells {
            for g in cell.group_stats.as_deref().unwrap_or_default() {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    cell.rule.name(),
                    cell.avg_budget,
                    cell.seed,
                    g.label,
                    fmt_float(g.mean_allocation),
                    fmt_float(g.frac_above_avg),
                ));
            }
        }
        write_file(&out_dir.join("groups.csv"), &csv)?;
        println!("wrote {}", out_dir.join("groups.csv").display());
    }

    Ok(())
}
