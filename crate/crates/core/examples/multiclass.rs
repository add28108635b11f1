//! Multiclass boosting with early stopping, comparing sketch strategies.
//!
//! Usage: `cargo run --release --example multiclass -- [classes]`

use std::time::Instant;

use sketchtree::booster::{train, BoostParams};
use sketchtree::data::{generate_synthetic, split_train_valid};
use sketchtree::metrics::evaluate;
use sketchtree::sketch::SketchStrategy;
use sketchtree::tree::TreeParams;

fn main() -> sketchtree::Result<()> {
    let classes = std::env::args()
        .nth(1)
        .map_or(20, |c| c.parse().expect("class count"));
    let ds = generate_synthetic(5000, 20, 10, classes, 1)?;
    let (tr, va) = split_train_valid(&ds, 0.2, 1)?;
    println!(
        "{} train / {} valid rows, {classes} classes",
        tr.n_rows(),
        va.n_rows()
    );
    for (strategy, k) in [
        (SketchStrategy::None, 0),
        (SketchStrategy::TopOutputs, 5),
        (SketchStrategy::RandomSampling, 5),
        (SketchStrategy::RandomProjection, 5),
    ] {
        let params = BoostParams {
            n_trees: 300,
            learning_rate: 0.1,
            tree: TreeParams {
                max_depth: 5,
                ..TreeParams::default()
            },
            sketch: strategy,
            k: k.max(1),
            early_stopping_rounds: 20,
            ..BoostParams::default()
        };
        let started = Instant::now();
        let model = train(&tr, Some(&va), &params)?;
        let report = evaluate(&model, &va)?;
        println!(
            "{:<10} trees {:>3}  valid {} {:.4}  accuracy {:.3}  {:.1}s",
            strategy.name(),
            model.trees().len(),
            report.primary.name,
            report.primary.value,
            report.auxiliary.map_or(f64::NAN, |m| m.value),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
