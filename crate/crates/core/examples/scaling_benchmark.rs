//! Training cost against class count, with and without a sketch.
//!
//! Usage: `cargo run --release --example scaling_benchmark -- [rows] [trees] [classes,...]`

use sketchtree::bench::{render_svg, run_bench, to_csv, BenchConfig};
use sketchtree::sketch::SketchStrategy;

fn main() -> sketchtree::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config = BenchConfig {
        rows: 10_000,
        trees: 20,
        classes: vec![5, 25, 100],
        strategies: vec![
            SketchStrategy::None,
            SketchStrategy::RandomProjection,
            SketchStrategy::TopOutputs,
        ],
        ..BenchConfig::default()
    };
    if let Some(rows) = args.first() {
        config.rows = rows.parse().expect("rows");
    }
    if let Some(trees) = args.get(1) {
        config.trees = trees.parse().expect("trees");
    }
    if let Some(classes) = args.get(2) {
        config.classes = classes
            .split(',')
            .map(|c| c.parse().expect("class count"))
            .collect();
    }
    let rows = run_bench(&config, |r| {
        eprintln!(
            "{:>4} classes  {:<10} k={:<3} {:.3} s/100 trees",
            r.classes, r.strategy, r.k, r.seconds
        )
    })?;
    print!("{}", to_csv(&rows));
    let svg = std::env::temp_dir().join("sketchtree_scaling.svg");
    std::fs::write(&svg, render_svg(&rows)).expect("write plot");
    eprintln!("plot written to {}", svg.display());
    Ok(())
}
