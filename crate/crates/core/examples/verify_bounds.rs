//! Randomized check of the deterministic sketch error bounds.
//!
//! Usage: `cargo run --release --example verify_bounds -- [trials] [k]`

use sketchtree::sketch::SketchStrategy;
use sketchtree::verify::{verify_bounds, VerifyConfig};

fn main() -> sketchtree::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer"));
    let config = VerifyConfig {
        trials: args.next().unwrap_or(50),
        k: args.next().unwrap_or(4),
        ..VerifyConfig::default()
    };
    let outcome = verify_bounds(&config)?;
    println!(
        "{} trials, {} checks, {} violations",
        outcome.trials.len(),
        outcome.checks,
        outcome.violations.len()
    );
    for strategy in SketchStrategy::ALL_REDUCING {
        let ratios: Vec<f64> = outcome
            .trials
            .iter()
            .flat_map(|t| t.reports.iter().filter(|r| r.strategy == strategy))
            .map(|r| r.operator_bound / r.strategy_bound.max(f64::MIN_POSITIVE))
            .collect();
        let worst = ratios.iter().copied().fold(0.0f64, f64::max);
        // Random strategies have probabilistic bounds with an assumed constant; reported only.
        let note = match strategy {
            SketchStrategy::RandomSampling | SketchStrategy::RandomProjection => {
                " (probabilistic, not checked)"
            }
            _ => "",
        };
        println!(
            "{:<12} worst operator error / strategy bound = {worst:.3}{note}",
            strategy.name()
        );
    }
    for v in &outcome.violations {
        println!(
            "violation: trial {} {} {}: {} > {}",
            v.trial, v.strategy, v.check, v.lhs, v.rhs
        );
    }
    Ok(())
}
