//! Growing one multi-output tree from the gradients at zero raw scores.
//!
//! Usage: `cargo run --example single_tree`

use ndarray::Array2;
use sketchtree::data::generate_synthetic;
use sketchtree::loss::grad_hess;
use sketchtree::quantize::{fit_bins, transform};
use sketchtree::sketch::{build_sketch, SketchStrategy};
use sketchtree::tree::{grow_tree, NodeRef, Tree, TreeParams};

fn print_node(tree: &Tree, node: NodeRef, indent: usize) {
    let pad = " ".repeat(indent);
    match node {
        NodeRef::Split(id) => {
            let s = tree.splits()[id];
            println!("{pad}feature {} bin <= {}", s.feature, s.threshold);
            print_node(tree, s.left, indent + 2);
            print_node(tree, s.right, indent + 2);
        }
        NodeRef::Leaf(id) => {
            let v: Vec<String> = tree
                .leaf_value(id)
                .iter()
                .map(|x| format!("{x:+.3}"))
                .collect();
            println!("{pad}leaf {id}: [{}]", v.join(", "));
        }
    }
}

fn main() -> sketchtree::Result<()> {
    let ds = generate_synthetic(1000, 5, 3, 4, 11)?;
    let binned = transform(ds.features(), &fit_bins(ds.features(), 32)?)?;
    let raw = Array2::zeros((ds.n_rows(), ds.n_outputs()));
    let gh = grad_hess(ds.task(), ds.targets(), raw.view())?;
    let params = TreeParams {
        max_depth: 3,
        ..TreeParams::default()
    };
    for strategy in [SketchStrategy::None, SketchStrategy::RandomProjection] {
        let sketch = build_sketch(gh.grad.view(), strategy, 2, 5)?;
        let tree = grow_tree(&binned, &gh, &sketch, &params)?;
        println!(
            "{strategy} (scoring width {}): {} leaves",
            sketch.k(),
            tree.n_leaves()
        );
        print_node(&tree, tree.root(), 2);
    }
    Ok(())
}
