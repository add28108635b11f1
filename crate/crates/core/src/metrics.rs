//! Evaluation metrics over `n × d` target and prediction matrices.
//!
//! All reductions collect per-row terms and sum them sequentially, so values do
//! not depend on the worker count.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::booster::{predict, Model};
use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-15;
/// Lower bound on a per-output R².
pub const R2_FLOOR: f64 = -1e6;

fn check_shapes(targets: ArrayView2<'_, f64>, predictions: ArrayView2<'_, f64>) -> Result<()> {
    if targets.dim() != predictions.dim() {
        return Err(Error::Shape(format!(
            "targets are {:?} but predictions are {:?}",
            targets.dim(),
            predictions.dim()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Shape("metric of an empty matrix".into()));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean negative log-likelihood: over rows for multiclass (`−log p_true`),
/// over rows and labels for multilabel (binary cross-entropy).
pub fn cross_entropy(
    targets: ArrayView2<'_, f64>,
    probabilities: ArrayView2<'_, f64>,
    task: TaskKind,
) -> Result<f64> {
    check_shapes(targets, probabilities)?;
    let (n, d) = targets.dim();
    let rows = targets.rows().into_iter().zip(probabilities.rows());
    match task {
        TaskKind::Multiclass => {
            let terms: Vec<f64> = rows
                .map(|(y, p)| {
                    y.iter()
                        .zip(p.iter())
                        .map(|(&y, &p)| -y * clamp(p).ln())
                        .sum()
                })
                .collect();
            Ok(terms.iter().sum::<f64>() / n as f64)
        }
        TaskKind::Multilabel => {
            let terms: Vec<f64> = rows
                .map(|(y, p)| {
                    y.iter()
                        .zip(p.iter())
                        .map(|(&y, &p)| {
                            let p = clamp(p);
                            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                        })
                        .sum()
                })
                .collect();
            Ok(terms.iter().sum::<f64>() / (n * d) as f64)
        }
        TaskKind::MultitaskRegression => Err(Error::InvalidArgument(
            "cross-entropy is defined for classification tasks only".into(),
        )),
    }
}

/// Root of the mean squared error over all `n·d` entries.
pub fn rmse(targets: ArrayView2<'_, f64>, predictions: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(targets, predictions)?;
    let terms: Vec<f64> = targets
        .rows()
        .into_iter()
        .zip(predictions.rows())
        .map(|(y, p)| y.iter().zip(p.iter()).map(|(y, p)| (y - p) * (y - p)).sum())
        .collect();
    Ok((terms.iter().sum::<f64>() / targets.len() as f64).sqrt())
}

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, v) in row.enumerate() {
        if v > best.1 {
            best = (j, v);
        }
    }
    best.0
}

/// Fraction of rows whose predicted argmax equals the target argmax. Ties
/// resolve to the lowest class index.
pub fn accuracy(targets: ArrayView2<'_, f64>, probabilities: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(targets, probabilities)?;
    let hits = targets
        .rows()
        .into_iter()
        .zip(probabilities.rows())
        .filter(|(y, p)| argmax(y.iter().copied()) == argmax(p.iter().copied()))
        .count();
    Ok(hits as f64 / targets.nrows() as f64)
}

/// `1 − SS_res / SS_tot` per output, averaged over outputs.
///
/// An output with constant targets contributes 0 when predicted exactly and
/// [`R2_FLOOR`] otherwise; every per-output value is floored at [`R2_FLOOR`].
pub fn r_squared(targets: ArrayView2<'_, f64>, predictions: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(targets, predictions)?;
    let (n, d) = targets.dim();
    let mut total = 0.0;
    for j in 0..d {
        let y = targets.column(j);
        let p = predictions.column(j);
        let mean = y.iter().sum::<f64>() / n as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let ss_res: f64 = y.iter().zip(p.iter()).map(|(y, p)| (y - p) * (y - p)).sum();
        let r2 = if ss_tot == 0.0 {
            if ss_res == 0.0 {
                0.0
            } else {
                R2_FLOOR
            }
        } else {
            (1.0 - ss_res / ss_tot).max(R2_FLOOR)
        };
        total += r2;
    }
    Ok(total / d as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

/// Primary metric (cross-entropy or RMSE) plus accuracy or R² where defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub primary: Metric,
    pub auxiliary: Option<Metric>,
    pub n: usize,
}

/// Report for task-space predictions (probabilities or values).
pub fn report(
    targets: ArrayView2<'_, f64>,
    predictions: ArrayView2<'_, f64>,
    task: TaskKind,
) -> Result<MetricReport> {
    let metric = |name: &str, value: f64| Metric {
        name: name.into(),
        value,
    };
    let (primary, auxiliary) = match task {
        TaskKind::Multiclass => (
            metric("cross_entropy", cross_entropy(targets, predictions, task)?),
            Some(metric("accuracy", accuracy(targets, predictions)?)),
        ),
        TaskKind::Multilabel => (
            metric("cross_entropy", cross_entropy(targets, predictions, task)?),
            None,
        ),
        TaskKind::MultitaskRegression => (
            metric("rmse", rmse(targets, predictions)?),
            Some(metric("r_squared", r_squared(targets, predictions)?)),
        ),
    };
    Ok(MetricReport {
        primary,
        auxiliary,
        n: targets.nrows(),
    })
}

/// Predicts `ds` with `model` and reports the task's metrics.
pub fn evaluate(model: &Model, ds: &Dataset) -> Result<MetricReport> {
    if model.task() != ds.task() || model.n_outputs() != ds.n_outputs() {
        return Err(Error::Shape(format!(
            "model ({} task, d={}) does not match data ({} task, d={})",
            model.task(),
            model.n_outputs(),
            ds.task(),
            ds.n_outputs()
        )));
    }
    let predictions = predict(model, ds.features())?;
    report(ds.targets(), predictions.view(), ds.task())
}
