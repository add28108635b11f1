//! Gradients and Hessian diagonals of the three training losses.
//!
//! Usage: `cargo run --example losses`

use ndarray::array;
use sketchtree::data::TaskKind;
use sketchtree::loss::{grad_hess, loss_value};

fn main() -> sketchtree::Result<()> {
    let raw = array![[2.0, 0.5, -1.0], [0.0, 0.0, 0.0]];
    let cases = [
        (
            TaskKind::Multiclass,
            array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
        ),
        (
            TaskKind::Multilabel,
            array![[1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        ),
        (
            TaskKind::MultitaskRegression,
            array![[1.5, 0.0, -2.0], [0.3, -0.3, 1.0]],
        ),
    ];
    for (task, targets) in cases {
        let gh = grad_hess(task, targets.view(), raw.view())?;
        println!(
            "{task}: mean loss {:.4}",
            loss_value(targets.view(), raw.view(), task)?
        );
        println!(
            "  gradient\n{:.4}\n  hessian diagonal\n{:.4}",
            gh.grad, gh.hess
        );
    }
    Ok(())
}
