//! Additive boosting of multioutput trees.
//!
//! Raw scores start at zero and every iteration adds `ε·f_t`. The same
//! multiply-then-add sequence is used during training and prediction, so
//! training-time scores and `predict_raw` agree bit for bit.

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::loss::{fill_grad_hess, loss_value, sigmoid, GradHess};
use crate::quantize::{fit_bins, transform, BinMapper, BinnedMatrix, MAX_REAL_BINS};
use crate::sketch::{build_sketch, Sketch, SketchStrategy};
use crate::tree::{grow_tree_detailed, grow_tree_scored, Tree, TreeParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    pub sketch: SketchStrategy,
    /// Sketch width; ignored by [`SketchStrategy::None`] and capped at `d`.
    pub k: usize,
    /// Patience in iterations; 0 disables early stopping.
    pub early_stopping_rounds: usize,
    pub seed: u64,
    pub max_bins: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            learning_rate: 0.05,
            tree: TreeParams::default(),
            sketch: SketchStrategy::None,
            k: 5,
            early_stopping_rounds: 100,
            seed: 0,
            max_bins: MAX_REAL_BINS,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if self.sketch != SketchStrategy::None && self.k == 0 {
            return Err(Error::InvalidArgument(format!(
                "sketch strategy {} needs k >= 1",
                self.sketch
            )));
        }
        if self.max_bins == 0 || self.max_bins > MAX_REAL_BINS {
            return Err(Error::InvalidArgument(format!(
                "max_bins must lie in [1, {MAX_REAL_BINS}], got {}",
                self.max_bins
            )));
        }
        self.tree.validate()
    }

    /// Sketch width actually used for `d` outputs.
    pub fn effective_k(&self, d: usize) -> usize {
        self.k.min(d)
    }
}

/// Per-iteration losses recorded during training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Training loss after each trained iteration.
    pub train_loss: Vec<f64>,
    /// Validation loss after each trained iteration; empty without validation data.
    pub valid_loss: Vec<f64>,
    /// Zero-based iteration with the lowest validation loss.
    pub best_iteration: Option<usize>,
}

/// A trained ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    trees: Vec<Tree>,
    learning_rate: f64,
    mapper: BinMapper,
    task: TaskKind,
    n_outputs: usize,
    history: TrainingHistory,
}

impl Model {
    /// Checks that every tree has `n_outputs` leaf columns and only splits on
    /// features and bin codes the mapper defines.
    pub fn new(
        trees: Vec<Tree>,
        learning_rate: f64,
        mapper: BinMapper,
        task: TaskKind,
        n_outputs: usize,
        history: TrainingHistory,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::CorruptModel(format!(
                "learning rate {learning_rate}"
            )));
        }
        if n_outputs == 0 || mapper.n_features() == 0 {
            return Err(Error::CorruptModel("model needs d >= 1 and m >= 1".into()));
        }
        for (t, tree) in trees.iter().enumerate() {
            if tree.n_outputs() != n_outputs {
                return Err(Error::CorruptModel(format!(
                    "tree {t} has {} outputs, expected {n_outputs}",
                    tree.n_outputs()
                )));
            }
            for split in tree.splits() {
                if split.feature >= mapper.n_features()
                    || usize::from(split.threshold) > mapper.n_bins(split.feature)
                {
                    return Err(Error::CorruptModel(format!(
                        "tree {t} splits feature {} at code {} outside the bin mapper",
                        split.feature, split.threshold
                    )));
                }
            }
        }
        Ok(Self {
            trees,
            learning_rate,
            mapper,
            task,
            n_outputs,
            history,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn mapper(&self) -> &BinMapper {
        &self.mapper
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_features(&self) -> usize {
        self.mapper.n_features()
    }

    pub fn history(&self) -> &TrainingHistory {
        &self.history
    }

    /// The first `n` trees with the same mapper and history.
    pub fn truncated(&self, n: usize) -> Model {
        Model {
            trees: self.trees[..n.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }
}

/// Wall time per training phase. Informational only; never stored in a model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub binning: Duration,
    pub gradients: Duration,
    pub sketch: Duration,
    pub histogram: Duration,
    pub split: Duration,
    pub partition: Duration,
    pub leaf_fit: Duration,
    pub update: Duration,
    pub total: Duration,
}

/// Seed for iteration `t`, a splitmix64 mix of the global seed and `t`.
pub fn iteration_seed(seed: u64, t: usize) -> u64 {
    let mut z = seed
        ^ (t as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_compatible(train: &Dataset, valid: &Dataset) -> Result<()> {
    if valid.task() != train.task()
        || valid.n_features() != train.n_features()
        || valid.n_outputs() != train.n_outputs()
    {
        return Err(Error::Shape(format!(
            "validation data ({} task, m={}, d={}) does not match training data ({} task, m={}, d={})",
            valid.task(),
            valid.n_features(),
            valid.n_outputs(),
            train.task(),
            train.n_features(),
            train.n_outputs()
        )));
    }
    Ok(())
}

/// `raw += ε·v` for every row of every leaf.
fn add_leaf_outputs(raw: &mut Array2<f64>, tree: &Tree, leaf_rows: &[Vec<usize>], lr: f64) {
    let d = raw.ncols();
    let raw = raw.as_slice_mut().expect("standard layout");
    for (leaf, rows) in leaf_rows.iter().enumerate() {
        let v = tree.leaf_value(leaf);
        let v = v.as_slice().expect("standard layout");
        for &r in rows {
            for (acc, &x) in raw[r * d..(r + 1) * d].iter_mut().zip(v) {
                *acc += lr * x;
            }
        }
    }
}

fn add_tree_outputs(raw: &mut Array2<f64>, tree: &Tree, binned: &BinnedMatrix, lr: f64) {
    raw.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let v = tree.leaf_value(tree.leaf_for(binned.row(i)));
            for (acc, &x) in row.iter_mut().zip(v.iter()) {
                *acc += lr * x;
            }
        });
}

/// Trains a model; see [`train_timed`].
pub fn train(train: &Dataset, valid: Option<&Dataset>, params: &BoostParams) -> Result<Model> {
    Ok(train_timed(train, valid, params)?.0)
}

/// State exposed to a training observer after each tree is grown.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub grad_hess: &'a GradHess,
    /// `None` when training without a sketch.
    pub sketch: Option<&'a Sketch>,
    pub tree: &'a Tree,
}

/// Boosting loop with per-phase wall times; see [`train_observed`].
pub fn train_timed(
    train: &Dataset,
    valid: Option<&Dataset>,
    params: &BoostParams,
) -> Result<(Model, PhaseTimings)> {
    train_observed(train, valid, params, |_| Ok(()))
}

/// Boosting loop with per-phase wall times.
///
/// Each iteration computes `(G, H)` at the current raw scores, sketches `G`
/// with [`iteration_seed`], grows one tree and adds it with weight `ε`. With
/// validation data and nonzero patience, training halts once
/// `early_stopping_rounds` iterations pass without a strictly lower
/// validation loss, and the model keeps the trees up to the best iteration.
/// `observer` runs after every grown tree; its time is not attributed to any
/// phase.
pub fn train_observed(
    train: &Dataset,
    valid: Option<&Dataset>,
    params: &BoostParams,
    mut observer: impl FnMut(IterationView<'_>) -> Result<()>,
) -> Result<(Model, PhaseTimings)> {
    params.validate()?;
    if let Some(v) = valid {
        check_compatible(train, v)?;
    }
    let started_total = Instant::now();
    let mut timings = PhaseTimings::default();
    let task = train.task();
    let (n, d) = (train.n_rows(), train.n_outputs());
    let k = params.effective_k(d);
    let lr = params.learning_rate;

    let started = Instant::now();
    let mapper = fit_bins(train.features(), params.max_bins)?;
    let binned = transform(train.features(), &mapper)?;
    let valid_binned = valid
        .map(|v| transform(v.features(), &mapper))
        .transpose()?;
    timings.binning = started.elapsed();

    let mut raw = Array2::<f64>::zeros((n, d));
    let mut valid_raw = valid.map(|v| Array2::<f64>::zeros((v.n_rows(), d)));
    let mut gh = GradHess::zeros(n, d);
    let mut trees = Vec::new();
    let mut history = TrainingHistory::default();
    let mut best: Option<(usize, f64)> = None;
    let mut observer_total = Duration::ZERO;

    for t in 0..params.n_trees {
        let started = Instant::now();
        let loss = fill_grad_hess(task, train.targets(), raw.view(), &mut gh);
        if t > 0 {
            history.train_loss.push(loss);
        }
        timings.gradients += started.elapsed();

        let (grown, sketch) = if params.sketch == SketchStrategy::None {
            (
                grow_tree_scored(&binned, &gh, gh.grad.view(), &params.tree)?,
                None,
            )
        } else {
            let started = Instant::now();
            let sketch = build_sketch(
                gh.grad.view(),
                params.sketch,
                k,
                iteration_seed(params.seed, t),
            )?;
            timings.sketch += started.elapsed();
            (
                grow_tree_detailed(&binned, &gh, &sketch, &params.tree)?,
                Some(sketch),
            )
        };
        timings.histogram += grown.timings.histogram;
        timings.split += grown.timings.split;
        timings.partition += grown.timings.partition;
        timings.leaf_fit += grown.timings.leaf_fit;

        let started = Instant::now();
        add_leaf_outputs(&mut raw, &grown.tree, &grown.leaf_rows, lr);
        let mut stop = false;
        if let (Some(v), Some(vb), Some(vr)) = (valid, &valid_binned, &mut valid_raw) {
            add_tree_outputs(vr, &grown.tree, vb, lr);
            let loss = loss_value(v.targets(), vr.view(), task)?;
            history.valid_loss.push(loss);
            if best.is_none_or(|(_, b)| loss < b) {
                best = Some((t, loss));
            } else if params.early_stopping_rounds > 0
                && t - best.map_or(0, |(i, _)| i) >= params.early_stopping_rounds
            {
                stop = true;
            }
        }
        timings.update += started.elapsed();
        let paused = Instant::now();
        observer(IterationView {
            iteration: t,
            grad_hess: &gh,
            sketch: sketch.as_ref(),
            tree: &grown.tree,
        })?;
        let observer_time = paused.elapsed();
        observer_total += observer_time;
        trees.push(grown.tree);
        if stop {
            break;
        }
    }

    // Losses after tree t are computed with the gradients of iteration t + 1;
    // the last one needs a separate pass.
    history
        .train_loss
        .push(loss_value(train.targets(), raw.view(), task)?);
    history.best_iteration = best.map(|(i, _)| i);
    if params.early_stopping_rounds > 0 {
        if let Some((i, _)) = best {
            trees.truncate(i + 1);
        }
    }
    timings.total = started_total.elapsed().saturating_sub(observer_total);
    let model = Model::new(trees, lr, mapper, task, d, history)?;
    Ok((model, timings))
}

fn check_columns(model: &Model, features: ArrayView2<'_, f64>) -> Result<()> {
    if features.ncols() != model.n_features() {
        return Err(Error::Shape(format!(
            "model expects {} feature columns, got {}",
            model.n_features(),
            features.ncols()
        )));
    }
    Ok(())
}

/// `Σ_t ε·f_t(x)` from zero, trees applied in list order.
pub fn predict_raw(model: &Model, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_columns(model, features)?;
    let binned = transform(features, &model.mapper)?;
    Ok(predict_raw_binned(model, &binned))
}

/// [`predict_raw`] on rows already binned with the model's mapper.
pub fn predict_raw_binned(model: &Model, binned: &BinnedMatrix) -> Array2<f64> {
    let lr = model.learning_rate;
    let mut raw = Array2::<f64>::zeros((binned.n_rows(), model.n_outputs));
    raw.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let codes = binned.row(i);
            for tree in &model.trees {
                let v = tree.leaf_value(tree.leaf_for(codes));
                for (acc, &x) in row.iter_mut().zip(v.iter()) {
                    *acc += lr * x;
                }
            }
        });
    raw
}

/// Maps raw scores to the task's output space: softmax rows (multiclass),
/// per-label sigmoid (multilabel) or identity (regression).
pub fn transform_raw(task: TaskKind, mut raw: Array2<f64>) -> Array2<f64> {
    match task {
        TaskKind::MultitaskRegression => {}
        TaskKind::Multilabel => raw.par_mapv_inplace(sigmoid),
        TaskKind::Multiclass => {
            raw.axis_iter_mut(Axis(0))
                .into_par_iter()
                .for_each(|mut row| {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|a| (a - max).exp());
                    let total = row.sum();
                    row.mapv_inplace(|e| e / total);
                });
        }
    }
    raw
}

/// Task-appropriate predictions; see [`transform_raw`].
pub fn predict(model: &Model, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(transform_raw(model.task, predict_raw(model, features)?))
}

/// Mean loss of the model on a dataset, as used for early stopping.
pub fn model_loss(model: &Model, ds: &Dataset) -> Result<f64> {
    loss_value(
        ds.targets(),
        predict_raw(model, ds.features())?.view(),
        model.task,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use ndarray::{array, Array2};

    fn quick(n_trees: usize) -> BoostParams {
        BoostParams {
            n_trees,
            learning_rate: 0.3,
            tree: TreeParams {
                max_depth: 3,
                ..TreeParams::default()
            },
            early_stopping_rounds: 0,
            ..BoostParams::default()
        }
    }

    #[test]
    fn iteration_seeds_differ() {
        let seeds: std::collections::HashSet<u64> =
            (0..1000).map(|t| iteration_seed(7, t)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(iteration_seed(1, 0), iteration_seed(2, 0));
    }

    #[test]
    fn params_validation() {
        assert!(BoostParams::default().validate().is_ok());
        let bad = [
            BoostParams {
                n_trees: 0,
                ..BoostParams::default()
            },
            BoostParams {
                learning_rate: 0.0,
                ..BoostParams::default()
            },
            BoostParams {
                sketch: SketchStrategy::RandomSampling,
                k: 0,
                ..BoostParams::default()
            },
            BoostParams {
                max_bins: 256,
                ..BoostParams::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        let no_sketch = BoostParams {
            k: 0,
            ..BoostParams::default()
        };
        assert!(no_sketch.validate().is_ok());
    }

    #[test]
    fn constant_target_root_leaf_closed_form() {
        let n = 40;
        let c = 3.0;
        let lambda = 1e-3;
        let ds = Dataset::new(
            Array2::ones((n, 1)),
            Array2::from_elem((n, 1), c),
            TaskKind::MultitaskRegression,
        )
        .unwrap();
        let params = BoostParams {
            n_trees: 1,
            learning_rate: 1.0,
            tree: TreeParams {
                max_depth: 1,
                lambda_l2: lambda,
                ..TreeParams::default()
            },
            ..BoostParams::default()
        };
        let model = train(&ds, None, &params).unwrap();
        let p = predict(&model, ds.features()).unwrap();
        let expected = c * n as f64 / (n as f64 + lambda);
        assert!(p.iter().all(|&v| (v - expected).abs() < 1e-12));
    }

    #[test]
    fn empty_model_predicts_zero_and_uniform() {
        let ds = generate_synthetic(20, 3, 2, 4, 1).unwrap();
        let trained = train(&ds, None, &quick(2)).unwrap();
        let empty = trained.truncated(0);
        assert_eq!(
            predict_raw(&empty, ds.features()).unwrap(),
            Array2::<f64>::zeros((20, 4))
        );
        let p = predict(&empty, ds.features()).unwrap();
        assert!(p.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn output_transforms() {
        let raw = Array2::zeros((3, 2));
        assert!(transform_raw(TaskKind::Multilabel, raw.clone())
            .iter()
            .all(|&v| v == 0.5));
        let r = array![[1.0, -2.0], [0.5, 7.0]];
        assert_eq!(transform_raw(TaskKind::MultitaskRegression, r.clone()), r);
        let p = transform_raw(
            TaskKind::Multiclass,
            array![[1000.0, 0.0, -3.0], [1.0, 2.0, 3.0]],
        );
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn additivity_is_exact() {
        let ds = generate_synthetic(80, 4, 3, 3, 2).unwrap();
        let model = train(&ds, None, &quick(6)).unwrap();
        let all = predict_raw(&model, ds.features()).unwrap();
        let head = predict_raw(&model.truncated(5), ds.features()).unwrap();
        let last =
            crate::tree::predict_tree(&model.trees()[5], ds.features(), model.mapper()).unwrap();
        let mut expected = head;
        expected.zip_mut_with(&last, |a, &v| *a += model.learning_rate() * v);
        assert_eq!(all, expected);
        let one = predict_raw(&model.truncated(1), ds.features()).unwrap();
        let first =
            crate::tree::predict_tree(&model.trees()[0], ds.features(), model.mapper()).unwrap();
        assert_eq!(one, first.mapv(|v| model.learning_rate() * v));
    }

    #[test]
    fn training_scores_match_prediction() {
        let ds = generate_synthetic(100, 5, 3, 3, 4).unwrap();
        let model = train(&ds, None, &quick(8)).unwrap();
        let loss = model_loss(&model, &ds).unwrap();
        assert_eq!(loss, *model.history().train_loss.last().unwrap());
    }

    #[test]
    fn train_loss_decreases_on_tiny_multiclass() {
        let ds = generate_synthetic(60, 4, 3, 3, 11).unwrap();
        let params = BoostParams {
            n_trees: 50,
            learning_rate: 0.1,
            ..quick(50)
        };
        let model = train(&ds, None, &params).unwrap();
        let losses = &model.history().train_loss;
        assert_eq!(losses.len(), 50);
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{} !< {}", w[1], w[0]);
        }
    }

    #[test]
    fn early_stopping_truncates_to_best_iteration() {
        // Labels independent of the features: validation loss must turn upward.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_simple_fn((200, 6), || rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
        let ds = Dataset::new(x, crate::data::one_hot(&labels, 3), TaskKind::Multiclass).unwrap();
        let (tr, va) = crate::data::split_train_valid(&ds, 0.3, 5).unwrap();
        let params = BoostParams {
            n_trees: 400,
            learning_rate: 0.5,
            tree: TreeParams {
                max_depth: 6,
                lambda_l2: 1e-3,
                ..TreeParams::default()
            },
            early_stopping_rounds: 5,
            ..BoostParams::default()
        };
        let model = train(&tr, Some(&va), &params).unwrap();
        let h = model.history();
        let best = h.best_iteration.unwrap();
        assert!(
            h.valid_loss.len() < 400,
            "overfitting run should stop early"
        );
        assert_eq!(h.valid_loss.len(), best + 1 + 5);
        assert_eq!(model.trees().len(), best + 1);
        let min = h.valid_loss.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(h.valid_loss[best], min);
        assert_eq!(model_loss(&model, &va).unwrap(), min);
    }

    #[test]
    fn mismatched_validation_is_rejected() {
        let a = generate_synthetic(30, 3, 2, 3, 1).unwrap();
        let b = generate_synthetic(30, 4, 2, 3, 1).unwrap();
        assert!(train(&a, Some(&b), &quick(1)).is_err());
        let model = train(&a, None, &quick(1)).unwrap();
        assert!(predict(&model, b.features()).is_err());
    }
}
