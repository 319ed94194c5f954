//! Benchmark fixtures shared by the criterion targets.

use ttc_core::{AllocConfig, QueryState, Rule, SyntheticInstance};

/// A deterministic spread of difficulties: Δ(i) = (i mod 97 + 1) / 100.
pub fn difficulty_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i % 97 + 1) as f64 / 100.0).collect()
}

/// An instance over the difficulty grid.
pub fn grid_instance(n: usize) -> SyntheticInstance {
    SyntheticInstance::from_deltas(&difficulty_grid(n)).expect("grid deltas are valid")
}

/// Query states warmed with `per_query` deterministic generations each, for
/// scoring benchmarks that need non-trivial histograms.
pub fn warmed_states(n: usize, per_query: u64) -> Vec<QueryState> {
    use ttc_core::{GenerationResult, QueryId};
    (0..n)
        .map(|i| {
            let mut s = QueryState::new(QueryId::new(format!("q{i}"), i));
            for g in 0..per_query {
                s.record_without_elimination(GenerationResult {
                    answer_key: format!("k{}", (i as u64 + g) % 7),
                    reward: ((i as u64 + g) % 10) as f64 / 10.0,
                    correct: Some(false),
                    gen_index: g,
                })
                .expect("in-range reward");
            }
            s
        })
        .collect()
}

/// A single-selection config for benches.
pub fn bench_config(rule: Rule, total_budget: u64) -> AllocConfig {
    let mut config = AllocConfig::new(rule, total_budget, 0);
    config.lambda = rule.default_lambda();
    config
}
