//! Every sketch strategy on one gradient matrix, with its operator-norm error
//! and the matching bound.
//!
//! Usage: `cargo run --example sketches -- [n] [d] [k]`

use sketchtree::sketch::{bound_report, build_sketch, singular_values, SketchStrategy};
use sketchtree::verify::random_gradient;

fn main() -> sketchtree::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer"))
        .collect();
    let (n, d, k) = (
        *args.first().unwrap_or(&200),
        *args.get(1).unwrap_or(&40),
        *args.get(2).unwrap_or(&5),
    );
    let g = random_gradient(n, d, 1);
    let sv = singular_values(g.view())?;
    println!(
        "G is {n}x{d}; sigma_1^2 = {:.2}, sigma_(k+1)^2 = {:.2}",
        sv[0] * sv[0],
        sv.get(k).map_or(0.0, |s| s * s)
    );
    println!(
        "{:<12} {:>14} {:>14} {:>14}",
        "strategy", "leaf-score err", "operator err", "bound"
    );
    for strategy in SketchStrategy::ALL_REDUCING {
        let sketch = build_sketch(g.view(), strategy, k, 3)?;
        let r = bound_report(g.view(), &sketch, 1.0, 500, 3)?;
        println!(
            "{:<12} {:>14.3} {:>14.3} {:>14.3}",
            strategy.name(),
            r.empirical_sup_error,
            r.operator_bound,
            r.strategy_bound
        );
    }
    Ok(())
}
