//! Saving a model to JSON, loading it back and checking predictions agree
//! bit for bit.
//!
//! Usage: `cargo run --example model_roundtrip`

use sketchtree::booster::{predict, train, BoostParams};
use sketchtree::data::generate_synthetic;
use sketchtree::model_store::{load, save, FORMAT_VERSION};
use sketchtree::sketch::SketchStrategy;

fn main() -> sketchtree::Result<()> {
    let ds = generate_synthetic(800, 6, 3, 5, 2)?;
    let params = BoostParams {
        n_trees: 30,
        sketch: SketchStrategy::TopOutputs,
        k: 2,
        ..BoostParams::default()
    };
    let model = train(&ds, None, &params)?;
    let path = std::env::temp_dir().join("sketchtree_model.json");
    save(&model, &path)?;
    let loaded = load(&path)?;
    let (a, b) = (
        predict(&model, ds.features())?,
        predict(&loaded, ds.features())?,
    );
    let identical = a
        .iter()
        .zip(b.iter())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    println!(
        "wrote {} (format version {FORMAT_VERSION}), {} trees",
        path.display(),
        loaded.trees().len()
    );
    println!("predictions identical after reload: {identical}");
    Ok(())
}
