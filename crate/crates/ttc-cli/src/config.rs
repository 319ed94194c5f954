//! Experiment configuration: a JSON file on disk, with command-line flags
//! taking precedence field by field, and built-in defaults underneath.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ttc_core::{
    max_samples_preset, Backend, GroupSpec, OracleKind, QueryId, QueryModel, ReplayBackend,
    ReplayExhaustedPolicy, ReplayLog, Rule, SyntheticBackend, SyntheticInstance,
    MAX_SAMPLES_PRESETS,
};

use crate::RunArgs;

pub const DEFAULT_AVG_BUDGETS: [u64; 4] = [4, 8, 16, 32];
pub const DEFAULT_SEEDS: [u64; 4] = [0, 1, 2, 3];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    backend: RawBackend,
    oracle: Option<RawOracle>,
    rules: Option<Vec<String>>,
    avg_budgets: Option<Vec<u64>>,
    seeds: Option<Vec<u64>>,
    k_per_step: Option<u64>,
    gamma: Option<f64>,
    lambda: Option<f64>,
    max_samples: Option<serde_json::Value>,
    on_replay_exhausted: Option<String>,
    out_dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    kind: String,
    deltas: Option<Vec<f64>>,
    groups: Option<Vec<RawGroup>>,
    invalid_prob: Option<f64>,
    wrong_answer_vocab: Option<u64>,
    wrong_answer_skew: Option<f64>,
    path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    label: String,
    count: usize,
    delta: f64,
    invalid_prob: Option<f64>,
    wrong_answer_vocab: Option<u64>,
    wrong_answer_skew: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    mode: String,
    gamma_slack: Option<f64>,
}

/// Per-query generation cap, before a concrete avg budget is known.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxSamplesSetting {
    Unbounded,
    Fixed(u64),
    Preset(String),
}

fn preset_names() -> Vec<&'static str> {
    MAX_SAMPLES_PRESETS.iter().map(|(name, _)| *name).collect()
}

impl MaxSamplesSetting {
    pub fn parse(text: &str) -> Result<Self> {
        if text == "unbounded" {
            return Ok(MaxSamplesSetting::Unbounded);
        }
        if let Ok(v) = text.parse::<u64>() {
            if v == 0 {
                bail!("max_samples must be at least 1 (or \"unbounded\")");
            }
            return Ok(MaxSamplesSetting::Fixed(v));
        }
        if preset_names().contains(&text) {
            return Ok(MaxSamplesSetting::Preset(text.to_string()));
        }
        bail!(
            "max_samples must be a number, \"unbounded\", or a preset ({})",
            preset_names().join(", ")
        )
    }

    fn from_json(value: &serde_json::Value) -> Result<Self> {
        match value {
            serde_json::Value::Null => Ok(MaxSamplesSetting::Unbounded),
            serde_json::Value::Number(n) => {
                let v = n
                    .as_u64()
                    .context("max_samples must be a nonnegative integer")?;
                if v == 0 {
                    bail!("max_samples must be at least 1 (or \"unbounded\")");
                }
                Ok(MaxSamplesSetting::Fixed(v))
            }
            serde_json::Value::String(s) => Self::parse(s),
            other => bail!("max_samples must be a number or string, got {other}"),
        }
    }

    /// The concrete cap for one cell.
    pub fn resolve(&self, avg_budget: u64) -> Result<Option<u64>> {
        match self {
            MaxSamplesSetting::Unbounded => Ok(None),
            MaxSamplesSetting::Fixed(v) => Ok(Some(*v)),
            MaxSamplesSetting::Preset(name) => max_samples_preset(name, avg_budget)
                .map(Some)
                .with_context(|| {
                    format!(
                        "preset {name} has no cap for avg budget {avg_budget} (defined for 4, 8, 16, 32)"
                    )
                }),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MaxSamplesSetting::Unbounded => "unbounded".to_string(),
            MaxSamplesSetting::Fixed(v) => v.to_string(),
            MaxSamplesSetting::Preset(name) => name.clone(),
        }
    }
}

/// Where generations come from.
pub enum BackendSpec {
    Flat { deltas: Vec<f64>, invalid_prob: f64, wrong_answer_vocab: u64, wrong_answer_skew: f64 },
    Grouped { groups: Vec<GroupSpec> },
    Replay { path: PathBuf, log: ReplayLog },
}

impl BackendSpec {
    pub fn n_queries(&self) -> usize {
        match self {
            BackendSpec::Flat { deltas, .. } => deltas.len(),
            BackendSpec::Grouped { groups } => groups.iter().map(|g| g.count).sum(),
            BackendSpec::Replay { log, .. } => log.queries().len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BackendSpec::Flat { .. } | BackendSpec::Grouped { .. } => "synthetic",
            BackendSpec::Replay { .. } => "replay",
        }
    }

    /// Group labels and each query's group index, for grouped populations.
    pub fn grouping(&self) -> Option<(Vec<String>, Vec<usize>)> {
        match self {
            BackendSpec::Grouped { groups } => {
                let labels = groups.iter().map(|g| g.label.clone()).collect();
                let mut group_of = Vec::new();
                for (gi, g) in groups.iter().enumerate() {
                    group_of.extend(std::iter::repeat_n(gi, g.count));
                }
                Some((labels, group_of))
            }
            _ => None,
        }
    }

    /// Fresh backend and query set for one cell. The seed feeds synthetic
    /// substreams; replay ignores it.
    pub fn build(
        &self,
        seed: u64,
        policy: ReplayExhaustedPolicy,
    ) -> Result<(Vec<QueryId>, Box<dyn Backend>)> {
        match self {
            BackendSpec::Flat { deltas, invalid_prob, wrong_answer_vocab, wrong_answer_skew } => {
                let queries: Vec<QueryId> = (0..deltas.len())
                    .map(|i| QueryId::new(format!("q{i}"), i))
                    .collect();
                let models: Vec<QueryModel> = deltas
                    .iter()
                    .map(|&delta| QueryModel {
                        delta,
                        invalid_prob: *invalid_prob,
                        wrong_answer_vocab: *wrong_answer_vocab,
                        wrong_answer_skew: *wrong_answer_skew,
                    })
                    .collect();
                let instance = SyntheticInstance::new(queries.clone(), models)
                    .context("invalid synthetic backend")?;
                Ok((queries, Box::new(SyntheticBackend::new(instance, seed))))
            }
            BackendSpec::Grouped { groups } => {
                let population = ttc_core::PopulationSpec::new(groups.clone(), 1);
                let (queries, instance, _) =
                    population.build().context("invalid synthetic population")?;
                Ok((queries, Box::new(SyntheticBackend::new(instance, seed))))
            }
            BackendSpec::Replay { log, .. } => {
                let queries = log.queries().to_vec();
                Ok((queries, Box::new(ReplayBackend::new(log.clone(), policy))))
            }
        }
    }
}

/// A fully resolved experiment: config file + flag overrides + defaults.
pub struct Experiment {
    pub backend: BackendSpec,
    pub oracle: OracleKind,
    pub rules: Vec<Rule>,
    pub avg_budgets: Vec<u64>,
    pub seeds: Vec<u64>,
    pub k_per_step: u64,
    pub gamma: f64,
    /// `None` means each rule uses its own default exploration weight.
    pub lambda: Option<f64>,
    pub max_samples: MaxSamplesSetting,
    pub on_replay_exhausted: ReplayExhaustedPolicy,
    pub out_dir: PathBuf,
}

fn parse_rule(text: &str) -> Result<Rule> {
    text.parse::<Rule>().map_err(|e| anyhow::anyhow!("{e}"))
}

fn no_duplicates<T: PartialEq + std::fmt::Display>(values: &[T], what: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            bail!("duplicate {what} {v}: output files would collide");
        }
    }
    Ok(())
}

fn resolve_backend(raw: RawBackend, config_dir: &Path) -> Result<BackendSpec> {
    match raw.kind.as_str() {
        "synthetic" => {
            if raw.path.is_some() {
                bail!("backend.path only applies to the replay backend");
            }
            match (raw.deltas, raw.groups) {
                (Some(_), Some(_)) => {
                    bail!("backend takes either deltas or groups, not both")
                }
                (None, None) => bail!("synthetic backend needs deltas or groups"),
                (Some(deltas), None) => {
                    if deltas.is_empty() {
                        bail!("backend.deltas is empty");
                    }
                    Ok(BackendSpec::Flat {
                        deltas,
                        invalid_prob: raw.invalid_prob.unwrap_or(0.0),
                        wrong_answer_vocab: raw.wrong_answer_vocab.unwrap_or(100),
                        wrong_answer_skew: raw.wrong_answer_skew.unwrap_or(1.0),
                    })
                }
                (None, Some(groups)) => {
                    if raw.invalid_prob.is_some()
                        || raw.wrong_answer_vocab.is_some()
                        || raw.wrong_answer_skew.is_some()
                    {
                        bail!(
                            "with groups, set invalid_prob/wrong_answer_vocab/wrong_answer_skew per group"
                        );
                    }
                    let groups: Vec<GroupSpec> = groups
                        .into_iter()
                        .map(|g| {
                            let mut spec = GroupSpec::new(g.label, g.count, g.delta);
                            if let Some(p) = g.invalid_prob {
                                spec.invalid_prob = p;
                            }
                            if let Some(v) = g.wrong_answer_vocab {
                                spec.wrong_answer_vocab = v;
                            }
                            if let Some(s) = g.wrong_answer_skew {
                                spec.wrong_answer_skew = s;
                            }
                            spec
                        })
                        .collect();
                    Ok(BackendSpec::Grouped { groups })
                }
            }
        }
        "replay" => {
            if raw.deltas.is_some()
                || raw.groups.is_some()
                || raw.invalid_prob.is_some()
                || raw.wrong_answer_vocab.is_some()
                || raw.wrong_answer_skew.is_some()
            {
                bail!("replay backend takes only a path");
            }
            let path = raw.path.context("replay backend needs a path")?;
            let path = config_dir.join(path);
            let log = ReplayLog::from_path(&path)
                .with_context(|| format!("loading replay log {}", path.display()))?;
            Ok(BackendSpec::Replay { path, log })
        }
        "live" => bail!(
            "the live backend needs a scoring hook and is driven through the library API, not the CLI"
        ),
        other => bail!("unknown backend kind {other:?} (expected \"synthetic\" or \"replay\")"),
    }
}

/// Loads `args.config` and applies flag overrides.
pub fn load(args: &RunArgs) -> Result<Experiment> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let raw: RawExperiment = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", args.config.display()))?;
    let config_dir = args.config.parent().unwrap_or_else(|| Path::new("."));

    let backend = resolve_backend(raw.backend, config_dir)?;

    let gamma = args.gamma.or(raw.gamma).unwrap_or(1.0);
    let oracle = match raw.oracle {
        None => OracleKind::ground_truth(),
        Some(o) => match o.mode.as_str() {
            "ground_truth" => {
                if o.gamma_slack.is_some_and(|s| s != 0.0) {
                    bail!("the ground-truth oracle has no slack; use the scored oracle");
                }
                OracleKind::ground_truth()
            }
            "scored" => OracleKind::scored(o.gamma_slack.unwrap_or(0.0)),
            other => {
                bail!("unknown oracle mode {other:?} (expected \"ground_truth\" or \"scored\")")
            }
        },
    };
    oracle.validate(gamma).map_err(|e| anyhow::anyhow!("{e}"))?;

    let rules: Vec<Rule> = match (&args.rule, raw.rules) {
        (Some(flag), _) => vec![parse_rule(flag)?],
        (None, Some(list)) => {
            if list.is_empty() {
                bail!("config rules list is empty");
            }
            list.iter().map(|r| parse_rule(r)).collect::<Result<_>>()?
        }
        (None, None) => vec![Rule::Elimination],
    };
    no_duplicates(&rules, "rule")?;

    let avg_budgets = match (args.avg_budget, raw.avg_budgets) {
        (Some(flag), _) => vec![flag],
        (None, Some(list)) if !list.is_empty() => list,
        (None, Some(_)) => bail!("config avg_budgets list is empty"),
        (None, None) => DEFAULT_AVG_BUDGETS.to_vec(),
    };
    no_duplicates(&avg_budgets, "avg budget")?;
    if avg_budgets.contains(&0) {
        bail!("avg budgets must be at least 1");
    }

    let seeds = match (args.seed, raw.seeds) {
        (Some(flag), _) => vec![flag],
        (None, Some(list)) if !list.is_empty() => list,
        (None, Some(_)) => bail!("config seeds list is empty"),
        (None, None) => DEFAULT_SEEDS.to_vec(),
    };
    no_duplicates(&seeds, "seed")?;

    let max_samples = match (&args.max_samples, &raw.max_samples) {
        (Some(flag), _) => MaxSamplesSetting::parse(flag)?,
        (None, Some(value)) => MaxSamplesSetting::from_json(value)?,
        (None, None) => MaxSamplesSetting::Unbounded,
    };

    let on_replay_exhausted = match raw.on_replay_exhausted.as_deref() {
        None => ReplayExhaustedPolicy::default(),
        Some(text) => text
            .parse::<ReplayExhaustedPolicy>()
            .map_err(|e| anyhow::anyhow!("{e}"))?,
    };

    let out_dir = args
        .out
        .clone()
        .or_else(|| raw.out_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(Experiment {
        backend,
        oracle,
        rules,
        avg_budgets,
        seeds,
        k_per_step: args.k.or(raw.k_per_step).unwrap_or(1),
        gamma,
        lambda: args.lambda.or(raw.lambda),
        max_samples,
        on_replay_exhausted,
        out_dir,
    })
}
