//! The `theory` subcommand: closed-form budget bounds next to Monte Carlo
//! estimates of what the allocator actually spends.

use anyhow::{bail, Context, Result};
use serde_json::json;

use ttc_core::{budget_bounds, Rule};

use crate::output::{json_num, write_json};
use crate::TheoryArgs;

pub fn theory(args: &TheoryArgs) -> Result<()> {
    let deltas: Vec<f64> = match (&args.deltas, args.n) {
        (Some(list), _) => list.clone(),
        (None, n) => {
            let n = n.unwrap_or(100);
            if n == 0 {
                bail!("n must be at least 1");
            }
            (1..=n).map(|i| i as f64 / n as f64).collect()
        }
    };
    let rule: Rule = args.rule.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    let bounds = budget_bounds(&deltas, args.delta, rule, args.trials, args.seed)
        .context("computing budget bounds")?;

    let ratio = bounds.uniform_required as f64 / bounds.mc_adaptive_mean;
    println!("queries:              {}", deltas.len());
    println!("confidence delta:     {}", args.delta);
    println!("rule:                 {}", rule.name());
    println!("adaptive closed form: {:.3}", bounds.adaptive_closed_form);
    println!("uniform required:     {}", bounds.uniform_required);
    println!(
        "mc adaptive spend:    {:.3} +/- {:.3}  ({} trials, seed {})",
        bounds.mc_adaptive_mean, bounds.mc_adaptive_stddev, args.trials, args.seed
    );
    println!("uniform / mc ratio:   {ratio:.2}x");
    println!("mc within closed form: {:.1}%", 100.0 * bounds.mc_success_rate);

    if let Some(out) = &args.out {
        let report = json!({
            "n": deltas.len(),
            "delta": json_num(args.delta),
            "rule": rule.name(),
            "trials": args.trials,
            "seed": args.seed,
            "adaptive_closed_form": json_num(bounds.adaptive_closed_form),
            "uniform_required": bounds.uniform_required,
            "ratio": json_num(ratio),
            "mc_adaptive_mean": json_num(bounds.mc_adaptive_mean),
            "mc_adaptive_stddev": json_num(bounds.mc_adaptive_stddev),
            "mc_success_rate": json_num(bounds.mc_success_rate),
        });
        write_json(out, &report)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
