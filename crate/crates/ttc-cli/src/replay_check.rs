//! The `replay-check` subcommand: validates a replay log and summarizes what
//! it can support.

use anyhow::{Context, Result};

use ttc_core::{disagreement_rate, ReplayLog};

use crate::ReplayCheckArgs;

pub fn replay_check(args: &ReplayCheckArgs) -> Result<()> {
    let log = ReplayLog::from_path(&args.log)
        .with_context(|| format!("replay log {} failed validation", args.log.display()))?;

    let n = log.queries().len();
    let lengths: Vec<usize> = (0..n).map(|i| log.stream(i).len()).collect();
    let min_len = lengths.iter().copied().min().unwrap_or(0);
    let max_len = lengths.iter().copied().max().unwrap_or(0);

    let mut reward_lo = f64::INFINITY;
    let mut reward_hi = f64::NEG_INFINITY;
    let mut with_bit = 0usize;
    let mut total = 0usize;
    for r in log.all_results() {
        reward_lo = reward_lo.min(r.reward);
        reward_hi = reward_hi.max(r.reward);
        with_bit += usize::from(r.correct.is_some());
        total += 1;
    }

    println!("queries:            {n}");
    println!("total generations:  {total}");
    println!("stream lengths:     {min_len}..{max_len} per query");
    println!("reward range:       [{reward_lo}, {reward_hi}]");
    println!("correctness bits:   {with_bit}/{total} generations");
    match disagreement_rate(log.all_results(), args.gamma, args.slack) {
        Some(rate) => println!(
            "disagreement:       {:.4} of labeled generations differ from the \
             reward >= {} criterion (slack {})",
            rate,
            args.gamma,
            args.slack
        ),
        None => println!("disagreement:       n/a (no correctness bits)"),
    }
    println!("ok");
    Ok(())
}
