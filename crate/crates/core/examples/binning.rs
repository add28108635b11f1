//! Reading a CSV and quantizing features into per-feature bins.
//!
//! Usage: `cargo run --example binning`

use ndarray::array;
use sketchtree::data::{generate_synthetic, load_csv, write_csv, TaskKind};
use sketchtree::quantize::{fit_bins, transform, NAN_BIN};

fn main() -> sketchtree::Result<()> {
    let dir = std::env::temp_dir().join("sketchtree_binning");
    std::fs::create_dir_all(&dir).map_err(|e| sketchtree::Error::InvalidArgument(e.to_string()))?;
    let path = dir.join("data.csv");
    write_csv(&generate_synthetic(500, 4, 2, 3, 7)?, &path)?;

    // A single integer label column is one-hot expanded.
    let ds = load_csv(&path, &["label"], TaskKind::Multiclass, true)?;
    println!(
        "{} rows, {} features, {} classes",
        ds.n_rows(),
        ds.n_features(),
        ds.n_outputs()
    );

    let mapper = fit_bins(ds.features(), 8)?;
    for f in 0..mapper.n_features() {
        let t: Vec<String> = mapper
            .thresholds(f)
            .iter()
            .map(|v| format!("{v:.2}"))
            .collect();
        println!(
            "feature {f}: {} bins, upper edges [{}]",
            mapper.n_bins(f),
            t.join(", ")
        );
    }

    // Missing values always land in the reserved bin.
    let probe = array![[f64::NAN, -10.0, 0.0, 10.0]];
    let codes = transform(probe.view(), &mapper)?;
    println!(
        "codes for [NaN, -10, 0, 10]: {:?} (bin {NAN_BIN} holds NaN)",
        codes.row(0)
    );
    Ok(())
}
