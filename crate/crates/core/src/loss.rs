//! Per-task losses with their gradients and diagonal Hessians with respect to
//! raw scores.
//!
//! | task        | loss per row                         | gradient | Hessian diagonal        |
//! |-------------|--------------------------------------|----------|-------------------------|
//! | regression  | `½‖y − a‖²`                          | `a − y`  | `1`                     |
//! | multilabel  | `Σ_j BCE(y_j, σ(a_j))`               | `p − y`  | `max(p(1 − p), 1e-16)`  |
//! | multiclass  | `−log softmax(a)[true class]`        | `p − y`  | `max(p(1 − p), 1e-16)`  |
//!
//! The softmax Hessian is not diagonal; only its diagonal is kept.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::data::{validate_targets, TaskKind};
use crate::error::{Error, Result};

/// Lower bound applied to every classification Hessian entry.
pub const HESSIAN_FLOOR: f64 = 1e-16;

/// Gradient and diagonal-Hessian matrices for one boosting step, both `n × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradHess {
    pub grad: Array2<f64>,
    pub hess: Array2<f64>,
}

impl GradHess {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            grad: Array2::zeros((n, d)),
            hess: Array2::zeros((n, d)),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.grad.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.grad.ncols()
    }
}

fn check_shapes(targets: ArrayView2<'_, f64>, raw: ArrayView2<'_, f64>) -> Result<()> {
    if targets.dim() != raw.dim() {
        return Err(Error::Shape(format!(
            "targets are {:?} but raw scores are {:?}",
            targets.dim(),
            raw.dim()
        )));
    }
    Ok(())
}

pub fn grad_hess_mse(targets: ArrayView2<'_, f64>, raw: ArrayView2<'_, f64>) -> Result<GradHess> {
    check_shapes(targets, raw)?;
    Ok(compute(TaskKind::MultitaskRegression, targets, raw))
}

/// Targets must be 0/1.
pub fn grad_hess_sigmoid_bce(
    targets: ArrayView2<'_, f64>,
    raw: ArrayView2<'_, f64>,
) -> Result<GradHess> {
    check_shapes(targets, raw)?;
    validate_targets(targets, TaskKind::Multilabel)?;
    Ok(compute(TaskKind::Multilabel, targets, raw))
}

/// Targets must be one-hot rows.
pub fn grad_hess_softmax(
    targets: ArrayView2<'_, f64>,
    raw: ArrayView2<'_, f64>,
) -> Result<GradHess> {
    check_shapes(targets, raw)?;
    validate_targets(targets, TaskKind::Multiclass)?;
    Ok(compute(TaskKind::Multiclass, targets, raw))
}

/// Dispatches on task after shape and target validation.
pub fn grad_hess(
    task: TaskKind,
    targets: ArrayView2<'_, f64>,
    raw: ArrayView2<'_, f64>,
) -> Result<GradHess> {
    match task {
        TaskKind::Multiclass => grad_hess_softmax(targets, raw),
        TaskKind::Multilabel => grad_hess_sigmoid_bce(targets, raw),
        TaskKind::MultitaskRegression => grad_hess_mse(targets, raw),
    }
}

fn compute(task: TaskKind, targets: ArrayView2<'_, f64>, raw: ArrayView2<'_, f64>) -> GradHess {
    let (n, d) = raw.dim();
    let mut out = GradHess::zeros(n, d);
    fill_grad_hess(task, targets, raw, &mut out);
    out
}

/// Writes derivatives into preallocated buffers and returns the mean loss at
/// `raw`, bit-identical to [`loss_value`]. Inputs are assumed validated.
pub(crate) fn fill_grad_hess(
    task: TaskKind,
    targets: ArrayView2<'_, f64>,
    raw: ArrayView2<'_, f64>,
    out: &mut GradHess,
) -> f64 {
    let (n, d) = raw.dim();
    if n == 0 || d == 0 {
        return 0.0;
    }
    let targets = targets.as_standard_layout();
    let raw = raw.as_standard_layout();
    let y = targets.as_slice().expect("standard layout");
    let a = raw.as_slice().expect("standard layout");
    let grad = out.grad.as_slice_mut().expect("standard layout");
    let hess = out.hess.as_slice_mut().expect("standard layout");
    let rows: Vec<f64> = grad
        .par_chunks_mut(d)
        .zip(hess.par_chunks_mut(d))
        .zip(y.par_chunks(d).zip(a.par_chunks(d)))
        .map(|((g, h), (y, a))| match task {
            TaskKind::MultitaskRegression => {
                for j in 0..d {
                    g[j] = a[j] - y[j];
                    h[j] = 1.0;
                }
                row_loss(task, y, a)
            }
            TaskKind::Multilabel => {
                for j in 0..d {
                    let p = sigmoid(a[j]);
                    g[j] = p - y[j];
                    h[j] = (p * (1.0 - p)).max(HESSIAN_FLOOR);
                }
                row_loss(task, y, a)
            }
            TaskKind::Multiclass => {
                let max = row_max(a);
                let mut total = 0.0;
                for j in 0..d {
                    let e = (a[j] - max).exp();
                    g[j] = e;
                    total += e;
                }
                for j in 0..d {
                    let p = g[j] / total;
                    g[j] = p - y[j];
                    h[j] = (p * (1.0 - p)).max(HESSIAN_FLOOR);
                }
                softmax_row_loss(y, a, max, total)
            }
        })
        .collect();
    mean_loss(task, &rows, n, d)
}

fn row_max(a: &[f64]) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Cross-entropy of one row given `max(a)` and `Σ exp(a − max)`.
fn softmax_row_loss(y: &[f64], a: &[f64], max: f64, total: f64) -> f64 {
    let lse = max + total.ln();
    y.iter().zip(a).map(|(y, a)| y * (lse - a)).sum()
}

fn mean_loss(task: TaskKind, rows: &[f64], n: usize, d: usize) -> f64 {
    let total: f64 = rows.iter().sum();
    match task {
        TaskKind::Multiclass => total / n as f64,
        TaskKind::Multilabel | TaskKind::MultitaskRegression => total / (n * d) as f64,
    }
}

#[inline]
pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-|a|)) + max(a, 0) - a·y`, the stable form of binary cross-entropy on logits.
#[inline]
fn bce_with_logits(y: f64, a: f64) -> f64 {
    a.max(0.0) - a * y + (-a.abs()).exp().ln_1p()
}

fn row_loss(task: TaskKind, y: &[f64], a: &[f64]) -> f64 {
    match task {
        TaskKind::MultitaskRegression => y.iter().zip(a).map(|(y, a)| (a - y) * (a - y)).sum(),
        TaskKind::Multilabel => y.iter().zip(a).map(|(&y, &a)| bce_with_logits(y, a)).sum(),
        TaskKind::Multiclass => {
            let max = row_max(a);
            let mut total = 0.0;
            for &v in a {
                total += (v - max).exp();
            }
            softmax_row_loss(y, a, max, total)
        }
    }
}

/// Mean loss of raw scores: categorical cross-entropy (multiclass), binary
/// cross-entropy averaged over rows and labels (multilabel) or mean squared
/// error over all `n·d` entries (regression).
pub fn loss_value(
    targets: ArrayView2<'_, f64>,
    raw: ArrayView2<'_, f64>,
    task: TaskKind,
) -> Result<f64> {
    check_shapes(targets, raw)?;
    let (n, d) = raw.dim();
    if n == 0 || d == 0 {
        return Err(Error::Shape("loss of an empty matrix".into()));
    }
    let targets = targets.as_standard_layout();
    let raw = raw.as_standard_layout();
    let y = targets.as_slice().expect("standard layout");
    let a = raw.as_slice().expect("standard layout");
    // Per-row values are reduced sequentially so the sum does not depend on
    // the worker count.
    let rows: Vec<f64> = y
        .par_chunks(d)
        .zip(a.par_chunks(d))
        .map(|(y, a)| row_loss(task, y, a))
        .collect();
    Ok(mean_loss(task, &rows, n, d))
}
