//! Property tests: randomized instances against brute-force re-computation
//! and the structural invariants every run must satisfy.

use std::collections::BTreeMap;

use proptest::prelude::*;

use ttc_core::{
    accuracy, coverage, efficiency_gain, entropy_score, gap_score, oracle_call_count,
    run_allocation, select_next, ucb_score, AllocConfig, AllocError, Backend, Gain,
    GenerationResult, MetricSelector, OracleKind, PerfPoint, QueryId, QueryState, QueryStatus,
    ReplayBackend, ReplayExhaustedPolicy, ReplayLog, Rule, SyntheticBackend, SyntheticInstance,
};

fn state_from(
    index: usize,
    results: &[(f64, u8, Option<bool>)],
    status: QueryStatus,
) -> QueryState {
    let mut s = QueryState::new(QueryId::new(format!("q{index}"), index));
    for (g, (reward, key, correct)) in results.iter().enumerate() {
        s.record_without_elimination(GenerationResult {
            answer_key: format!("k{key}"),
            reward: *reward,
            correct: *correct,
            gen_index: g as u64,
        })
        .unwrap();
    }
    s.status = status;
    s
}

fn arb_status() -> impl Strategy<Value = QueryStatus> {
    prop::sample::select(vec![
        QueryStatus::Active,
        QueryStatus::Eliminated,
        QueryStatus::Capped,
    ])
}

proptest! {
    /// Incremental per-query bookkeeping agrees with recomputing everything
    /// from the raw response list.
    #[test]
    fn recording_matches_brute_force(
        results in prop::collection::vec(
            (0.0f64..=1.0, 0u8..4, prop::option::of(any::<bool>())),
            0..40,
        ),
    ) {
        let state = state_from(0, &results, QueryStatus::Active);
        prop_assert_eq!(state.n_generations, results.len() as u64);
        prop_assert_eq!(state.responses.len(), results.len());

        let mut best_idx: Option<usize> = None;
        for (i, r) in results.iter().enumerate() {
            if best_idx.is_none_or(|b| r.0 > results[b].0) {
                best_idx = Some(i);
            }
        }
        prop_assert_eq!(state.best_index, best_idx);
        prop_assert_eq!(state.best_reward, best_idx.map(|i| results[i].0));

        let mut hist: BTreeMap<String, u64> = BTreeMap::new();
        for (_, key, _) in &results {
            *hist.entry(format!("k{key}")).or_insert(0) += 1;
        }
        prop_assert_eq!(&state.answer_counts, &hist);

        match state.empirical_mean_reward() {
            None => prop_assert!(results.is_empty()),
            Some(mean) => {
                let expect = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
                prop_assert!((mean - expect).abs() < 1e-12);
                prop_assert!(mean <= state.best_reward.unwrap() + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]
    /// Structural invariants of a full run: the budget is conserved, the
    /// trace counts every generation exactly once, coverage never falls, the
    /// active set never grows, and (for adaptive rules under ground truth)
    /// elimination happens exactly on the first correct response.
    #[test]
    fn allocation_invariants(
        deltas in prop::collection::vec(0.0f64..=1.0, 1..8),
        budget in 0u64..120,
        rule_idx in 0usize..5,
        k in prop::sample::select(vec![1u64, 2, 4, 8]),
        gamma in prop::sample::select(vec![0.97, 0.98, 0.99, 1.0]),
        seed in any::<u64>(),
        max_samples in prop::option::of(1u64..20),
    ) {
        let rule = Rule::ALL[rule_idx];
        let instance = SyntheticInstance::from_deltas(&deltas).unwrap();
        let queries = instance.queries().to_vec();
        let mut backend = SyntheticBackend::new(instance, seed);
        let mut config = AllocConfig::new(rule, budget, seed);
        config.k_per_step = k;
        config.gamma = gamma;
        config.lambda = rule.default_lambda();
        config.max_samples = max_samples;
        let outcome =
            run_allocation(&queries, &mut backend, &OracleKind::ground_truth(), &config)
                .unwrap();

        let per_sum: u64 = outcome.ledger.per_query.iter().sum();
        prop_assert_eq!(outcome.ledger.spent, per_sum);
        prop_assert!(outcome.ledger.spent <= budget);
        prop_assert_eq!(outcome.trace.generations(), outcome.ledger.spent);
        prop_assert_eq!(oracle_call_count(&outcome.trace), outcome.ledger.spent);

        let mut prev_cov = 0.0f64;
        let mut prev_active = queries.len();
        let mut prev_round = 0u64;
        for (i, row) in outcome.trace.rows.iter().enumerate() {
            prop_assert_eq!(row.spent, i as u64 + 1);
            let cov = row.coverage.expect("ground truth always has bits");
            prop_assert!(cov >= prev_cov);
            prev_cov = cov;
            prop_assert!(row.active_count <= prev_active);
            prev_active = row.active_count;
            prop_assert!(row.round >= prev_round);
            prev_round = row.round;
        }

        for (i, state) in outcome.states.iter().enumerate() {
            prop_assert_eq!(state.n_generations, outcome.ledger.per_query[i]);
            let successes =
                state.responses.iter().filter(|r| r.correct == Some(true)).count();
            if rule == Rule::Uniform {
                prop_assert_eq!(state.status, QueryStatus::Active);
                prop_assert_eq!(state.eliminated_round, None);
            } else if state.status == QueryStatus::Eliminated {
                // Exactly one success, and it is the final response: under
                // ground truth every success clears γ_eff, so the query is
                // retired the moment it first succeeds.
                prop_assert_eq!(successes, 1);
                prop_assert_eq!(state.responses.last().unwrap().correct, Some(true));
                prop_assert!(state.eliminated_round.is_some());
            } else {
                prop_assert_eq!(successes, 0);
                prop_assert_eq!(state.eliminated_round, None);
            }
            if rule != Rule::Uniform {
                if let Some(cap) = max_samples {
                    prop_assert!(state.n_generations <= cap);
                    if state.status == QueryStatus::Capped {
                        prop_assert_eq!(state.n_generations, cap);
                    }
                } else {
                    prop_assert_ne!(state.status, QueryStatus::Capped);
                }
            }
        }

        if rule == Rule::Uniform {
            // Synthetic streams never dry up, so uniform spends the whole
            // budget in the exact ⌊B/n⌋-plus-remainder split.
            prop_assert_eq!(outcome.ledger.spent, budget);
            let n = queries.len() as u64;
            for (i, &c) in outcome.ledger.per_query.iter().enumerate() {
                prop_assert_eq!(c, budget / n + u64::from((i as u64) < budget % n));
            }
        }
    }
}

proptest! {
    /// `select_next` returns an eligible query whose score no other eligible
    /// query beats, with ties broken to the smallest index.
    #[test]
    fn select_next_is_the_argbest_over_eligible_queries(
        specs in prop::collection::vec(
            (
                prop::collection::vec((0.0f64..=1.0, 0u8..4), 0..12),
                arb_status(),
            ),
            1..10,
        ),
        rule_idx in 0usize..3,
        lambda in 0.0f64..4.0,
        gamma in 0.9f64..=1.0,
        max_samples in prop::option::of(1u64..8),
    ) {
        let rule = [Rule::Ucb, Rule::Gap, Rule::Entropy][rule_idx];
        let states: Vec<QueryState> = specs
            .iter()
            .enumerate()
            .map(|(i, (results, status))| {
                let results: Vec<(f64, u8, Option<bool>)> =
                    results.iter().map(|&(r, k)| (r, k, None)).collect();
                state_from(i, &results, *status)
            })
            .collect();
        let mut config = AllocConfig::new(rule, 100, 0);
        config.lambda = lambda;
        config.gamma = gamma;
        config.max_samples = max_samples;

        let score = |s: &QueryState| match rule {
            Rule::Ucb => ucb_score(s, lambda),
            Rule::Gap => gap_score(s, gamma),
            Rule::Entropy => entropy_score(s, lambda),
            _ => unreachable!(),
        };
        let eligible: Vec<usize> = states
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                s.status == QueryStatus::Active
                    && max_samples.is_none_or(|cap| s.n_generations < cap)
            })
            .map(|(i, _)| i)
            .collect();

        match select_next(&states, &config) {
            Ok(pick) => {
                prop_assert!(eligible.contains(&pick));
                for &i in &eligible {
                    let (sp, si) = (score(&states[pick]), score(&states[i]));
                    if rule == Rule::Gap {
                        prop_assert!(sp <= si);
                    } else {
                        prop_assert!(sp >= si);
                    }
                    if sp == si {
                        prop_assert!(pick <= i, "ties must break to the smallest index");
                    }
                }
            }
            Err(AllocError::NoEligibleQuery) => prop_assert!(eligible.is_empty()),
            Err(other) => prop_assert!(false, "unexpected error: {other}"),
        }
    }
}

proptest! {
    /// Replay batches, however sliced, concatenate to the recorded per-query
    /// streams in order.
    #[test]
    fn replay_batches_concatenate_to_log_prefixes(
        lens in prop::collection::vec(1usize..10, 1..4),
        draws in prop::collection::vec((0usize..4, 1u64..5), 0..30),
    ) {
        let mut text = String::new();
        for (q, &len) in lens.iter().enumerate() {
            for g in 0..len {
                text.push_str(&format!(
                    "{{\"query_id\": \"q{q}\", \"gen_index\": {g}, \"answer_key\": \"a{}\", \"reward\": {}}}\n",
                    g % 3,
                    (g * 7 % 11) as f64 / 10.0,
                ));
            }
        }
        let log = ReplayLog::from_jsonl_str(&text).unwrap();
        let queries = log.queries().to_vec();
        let reference: Vec<Vec<GenerationResult>> =
            (0..queries.len()).map(|i| log.stream(i).to_vec()).collect();
        let mut backend = ReplayBackend::new(log, ReplayExhaustedPolicy::Cap);

        let mut consumed: Vec<Vec<GenerationResult>> = vec![Vec::new(); queries.len()];
        for (q, k) in draws {
            let q = q % queries.len();
            let batch = backend.generate_batch(&queries[q], k).unwrap();
            consumed[q].extend(batch.results);
        }
        for (q, got) in consumed.iter().enumerate() {
            prop_assert_eq!(got.as_slice(), &reference[q][..got.len()]);
        }
    }
}

proptest! {
    /// Coverage and accuracy depend only on the multiset of query states.
    #[test]
    fn metrics_are_permutation_invariant(
        specs in prop::collection::vec(
            prop::collection::vec(
                (0.0f64..=1.0, 0u8..4, prop::option::of(any::<bool>())),
                0..6,
            ),
            1..8,
        ),
        rotate_by in 0usize..8,
    ) {
        let states: Vec<QueryState> = specs
            .iter()
            .enumerate()
            .map(|(i, results)| state_from(i, results, QueryStatus::Active))
            .collect();
        let mut rotated = states.clone();
        rotated.rotate_left(rotate_by % states.len());
        prop_assert_eq!(coverage(&states), coverage(&rotated));
        prop_assert_eq!(accuracy(&states), accuracy(&rotated));
    }
}

proptest! {
    /// A strictly improving curve measured against itself always reports a
    /// gain of exactly 1×, at grid points and between them.
    #[test]
    fn efficiency_gain_is_identity_on_itself(
        steps in prop::collection::vec((1u64..10, 0.01f64..0.2), 2..8),
    ) {
        let mut curve = Vec::with_capacity(steps.len());
        let (mut b, mut v) = (0u64, 0.0f64);
        for (db, dv) in steps {
            b += db;
            v += dv;
            curve.push(PerfPoint { budget: b, coverage: v, accuracy: v });
        }
        let mut probes: Vec<u64> = curve.iter().map(|p| p.budget).collect();
        for pair in curve.windows(2) {
            probes.push((pair[0].budget + pair[1].budget) / 2);
        }
        for budget in probes {
            match efficiency_gain(&curve, &curve, budget, MetricSelector::Coverage).unwrap() {
                Gain::Ratio(r) => prop_assert!(
                    (r - 1.0).abs() < 1e-9,
                    "self-comparison at {budget} gave {r}"
                ),
                Gain::Unattained => prop_assert!(false, "self-comparison unattained"),
            }
        }
    }
}

proptest! {
    /// A query's synthetic stream depends only on (root seed, query index,
    /// draw count) — never on how draws interleave with other queries.
    #[test]
    fn synthetic_streams_ignore_interleaving(
        deltas in prop::collection::vec(0.0f64..=1.0, 1..5),
        plan in prop::collection::vec((0usize..5, 1u64..6), 0..20),
        seed in any::<u64>(),
    ) {
        let instance = SyntheticInstance::from_deltas(&deltas).unwrap();
        let queries = instance.queries().to_vec();
        let n = queries.len();

        let mut interleaved: Vec<Vec<GenerationResult>> = vec![Vec::new(); n];
        let mut backend = SyntheticBackend::new(instance.clone(), seed);
        for &(q, k) in &plan {
            let q = q % n;
            let batch = backend.generate_batch(&queries[q], k).unwrap();
            interleaved[q].extend(batch.results);
        }

        let mut backend = SyntheticBackend::new(instance, seed);
        for (q, got) in interleaved.iter().enumerate() {
            if got.is_empty() {
                continue;
            }
            let batch = backend.generate_batch(&queries[q], got.len() as u64).unwrap();
            prop_assert_eq!(got, &batch.results);
        }
    }
}
