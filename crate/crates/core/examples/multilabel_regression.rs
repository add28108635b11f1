//! Multilabel classification and multi-target regression on toy data.
//!
//! Usage: `cargo run --release --example multilabel_regression`

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchtree::booster::{train, BoostParams};
use sketchtree::data::{split_train_valid, Dataset, TaskKind};
use sketchtree::metrics::evaluate;
use sketchtree::sketch::SketchStrategy;

fn toy(task: TaskKind, n: usize, d: usize, seed: u64) -> sketchtree::Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Array2<f64> = Array2::from_shape_simple_fn((n, 8), || rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((n, d), |(i, j)| {
        let signal = (3.0 * x[[i, j % 8]]).sin() + x[[i, (j + 3) % 8]] * x[[i, (j + 5) % 8]];
        match task {
            TaskKind::MultitaskRegression => signal,
            _ => f64::from(signal > 0.0),
        }
    });
    Dataset::new(x, y, task)
}

fn main() -> sketchtree::Result<()> {
    for task in [TaskKind::Multilabel, TaskKind::MultitaskRegression] {
        let ds = toy(task, 4000, 16, 3)?;
        let (tr, va) = split_train_valid(&ds, 0.25, 3)?;
        for strategy in [SketchStrategy::None, SketchStrategy::RandomProjection] {
            let params = BoostParams {
                n_trees: 200,
                learning_rate: 0.1,
                sketch: strategy,
                k: 4,
                early_stopping_rounds: 20,
                ..BoostParams::default()
            };
            let model = train(&tr, Some(&va), &params)?;
            let r = evaluate(&model, &va)?;
            let aux = r
                .auxiliary
                .map(|m| format!("  {} {:.4}", m.name, m.value))
                .unwrap_or_default();
            println!(
                "{:<21} {:<10} {} {:.4}{aux}",
                task.to_string(),
                strategy.name(),
                r.primary.name,
                r.primary.value
            );
        }
    }
    Ok(())
}
