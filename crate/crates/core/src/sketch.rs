//! Sketches of the gradient matrix used for split scoring.
//!
//! Split search scores a leaf `R` with `S_G(R) = ‖Gᵀv_R‖² / (|R| + λ)`, which
//! costs `O(d)` per histogram bin. A sketch `G_k` (`n × k`, `k ≤ d`) replaces
//! `G` during structure search only; leaf values always use the full `G`.
//!
//! For any sketch, `sup_R |S_G(R) − S_{G_k}(R)| ≤ ‖GGᵀ − G_kG_kᵀ‖₂`, so every
//! strategy here aims at a small operator-norm error:
//!
//! * [`top_outputs`]: the `k` columns of largest norm; error at most the sum of
//!   the dropped squared column norms.
//! * [`random_sampling`]: `k` i.i.d. columns drawn with probability
//!   `p_i ∝ ‖g_i‖²`, each rescaled by `1/√(k p_i)` so `E[G_kG_kᵀ] = GGᵀ`.
//! * [`random_projection`]: `G_k = GΠ` with `Π_ij ~ N(0, 1/k)`.
//! * [`truncated_svd`]: `U_kΣ_k`, the optimal rank-`k` choice with error
//!   `σ²_{k+1}`. Too slow for training; kept as the reference point.

use std::borrow::Cow;
use std::fmt;

use nalgebra::DMatrix;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration cap for [`operator_error`].
pub const POWER_ITERATION_CAP: usize = 1000;
/// Relative change between successive norm estimates that stops [`operator_error`].
pub const POWER_ITERATION_TOL: f64 = 1e-14;
/// Block width for [`operator_error`], capped at `n`.
pub const POWER_BLOCK: usize = 8;
/// Relative size below which the operator error is rounding noise.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;
/// Failure probability plugged into the probabilistic bounds of [`BoundReport`].
pub const BOUND_DELTA: f64 = 0.1;

const POWER_ITERATION_SEED: u64 = 0x005E_ED0F_0E7A;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum SketchStrategy {
    /// Score with the full gradient matrix.
    #[default]
    None,
    /// The k output columns of largest norm.
    #[value(name = "top", alias = "top_outputs")]
    TopOutputs,
    /// k columns sampled in proportion to squared norm, rescaled.
    #[value(name = "sampling", alias = "random_sampling")]
    RandomSampling,
    /// Gaussian projection onto k columns.
    #[value(name = "projection", alias = "random_projection")]
    RandomProjection,
    /// Best rank-k factor; slow, for reference.
    #[value(name = "svd", alias = "truncated_svd")]
    TruncatedSvd,
}

impl SketchStrategy {
    pub const ALL_REDUCING: [SketchStrategy; 4] = [
        SketchStrategy::TopOutputs,
        SketchStrategy::RandomSampling,
        SketchStrategy::RandomProjection,
        SketchStrategy::TruncatedSvd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SketchStrategy::None => "none",
            SketchStrategy::TopOutputs => "top",
            SketchStrategy::RandomSampling => "sampling",
            SketchStrategy::RandomProjection => "projection",
            SketchStrategy::TruncatedSvd => "svd",
        }
    }
}

impl fmt::Display for SketchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reduced gradient matrix plus how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Sketch {
    pub gk: Array2<f64>,
    pub strategy: SketchStrategy,
    /// Source columns, for column-selecting strategies (in `gk` column order).
    pub chosen_indices: Option<Vec<usize>>,
    pub seed: u64,
}

impl Sketch {
    pub fn k(&self) -> usize {
        self.gk.ncols()
    }

    /// Matrix used for split scoring.
    ///
    /// Split scores are sums of squares over columns, so any column order
    /// gives the same value mathematically. Top-outputs sketches are scored in
    /// ascending source-column order so that `k = d` reproduces the unsketched
    /// floating-point summation exactly.
    pub fn scoring_matrix(&self) -> Cow<'_, Array2<f64>> {
        match (&self.strategy, &self.chosen_indices) {
            (SketchStrategy::TopOutputs, Some(idx)) if idx.windows(2).any(|w| w[0] > w[1]) => {
                let mut order: Vec<usize> = (0..idx.len()).collect();
                order.sort_by_key(|&c| idx[c]);
                Cow::Owned(self.gk.select(Axis(1), &order))
            }
            _ => Cow::Borrowed(&self.gk),
        }
    }
}

fn check_k(k: usize, limit: usize) -> Result<()> {
    if k == 0 || k > limit {
        return Err(Error::InvalidArgument(format!(
            "sketch dimension k must lie in [1, {limit}], got {k}"
        )));
    }
    Ok(())
}

/// Squared Euclidean norm of every column.
pub fn column_sq_norms(g: ArrayView2<'_, f64>) -> Vec<f64> {
    let mut norms = vec![0.0; g.ncols()];
    for row in g.rows() {
        for (acc, &v) in norms.iter_mut().zip(row.iter()) {
            *acc += v * v;
        }
    }
    norms
}

/// Column indices sorted by descending squared norm, ties by lower index.
pub fn columns_by_norm(norms: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order
}

/// Dispatches on `strategy`; `None` copies `G` and ignores `k`.
pub fn build_sketch(
    g: ArrayView2<'_, f64>,
    strategy: SketchStrategy,
    k: usize,
    seed: u64,
) -> Result<Sketch> {
    match strategy {
        SketchStrategy::None => Ok(Sketch {
            gk: g.to_owned(),
            strategy,
            chosen_indices: None,
            seed,
        }),
        SketchStrategy::TopOutputs => top_outputs(g, k),
        SketchStrategy::RandomSampling => random_sampling(g, k, seed),
        SketchStrategy::RandomProjection => random_projection(g, k, seed),
        SketchStrategy::TruncatedSvd => truncated_svd(g, k),
    }
}

/// The `k` columns of largest Euclidean norm, unscaled, in descending-norm order.
pub fn top_outputs(g: ArrayView2<'_, f64>, k: usize) -> Result<Sketch> {
    check_k(k, g.ncols())?;
    let mut order = columns_by_norm(&column_sq_norms(g));
    order.truncate(k);
    Ok(Sketch {
        gk: g.select(Axis(1), &order),
        strategy: SketchStrategy::TopOutputs,
        chosen_indices: Some(order),
        seed: 0,
    })
}

/// Sampling probabilities `‖g_i‖² / ‖G‖²_F`, uniform when `G = 0`.
pub fn sampling_probabilities(g: ArrayView2<'_, f64>) -> Vec<f64> {
    let norms = column_sq_norms(g);
    let total: f64 = norms.iter().sum();
    if total > 0.0 {
        norms.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / norms.len() as f64; norms.len()]
    }
}

/// `k` i.i.d. column draws with replacement, column `j` of the sketch being
/// `g_{i_j} / √(k p_{i_j})`.
pub fn random_sampling(g: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<Sketch> {
    check_k(k, g.ncols())?;
    let probs = sampling_probabilities(g);
    let dist = WeightedIndex::new(&probs)
        .map_err(|e| Error::InvalidArgument(format!("sampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = (0..k).map(|_| dist.sample(&mut rng)).collect();
    let mut gk = g.select(Axis(1), &chosen);
    for (mut col, &i) in gk.columns_mut().into_iter().zip(&chosen) {
        let scale = 1.0 / (k as f64 * probs[i]).sqrt();
        col.mapv_inplace(|v| v * scale);
    }
    Ok(Sketch {
        gk,
        strategy: SketchStrategy::RandomSampling,
        chosen_indices: Some(chosen),
        seed,
    })
}

/// The `d × k` Gaussian projection with `N(0, 1/k)` entries, drawn row-major.
pub fn projection_matrix(d: usize, k: usize, seed: u64) -> Result<Array2<f64>> {
    check_k(k, d)?;
    let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Array2::from_shape_simple_fn((d, k), || {
        normal.sample(&mut rng)
    }))
}

/// `G Π` with a fresh Gaussian `Π`.
pub fn random_projection(g: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<Sketch> {
    let pi = projection_matrix(g.ncols(), k, seed)?;
    Ok(Sketch {
        gk: g.dot(&pi),
        strategy: SketchStrategy::RandomProjection,
        chosen_indices: None,
        seed,
    })
}

fn to_nalgebra(g: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[[i, j]])
}

/// Singular values in descending order.
pub fn singular_values(g: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let svd = to_nalgebra(g)
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed)?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Best rank-`k` factor `U_k Σ_k`. Columns beyond `min(n, d)` are zero.
pub fn truncated_svd(g: ArrayView2<'_, f64>, k: usize) -> Result<Sketch> {
    check_k(k, g.ncols())?;
    let svd = to_nalgebra(g)
        .try_svd(true, false, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed)?;
    let u = svd.u.as_ref().ok_or(Error::SvdFailed)?;
    let rank = svd.singular_values.len();
    let gk = Array2::from_shape_fn((g.nrows(), k), |(i, j)| {
        if j < rank {
            u[(i, j)] * svd.singular_values[j]
        } else {
            0.0
        }
    });
    Ok(Sketch {
        gk,
        strategy: SketchStrategy::TruncatedSvd,
        chosen_indices: None,
        seed: 0,
    })
}

/// Result of [`operator_error`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorNorm {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `‖GGᵀ − G_kG_kᵀ‖₂` by block power iteration.
///
/// The symmetric difference `D` is applied as `G(GᵀX) − G_k(G_kᵀX)`, never
/// formed. A block of [`POWER_BLOCK`] orthonormal vectors is repeatedly
/// multiplied by `D` and re-orthonormalized; the largest absolute eigenvalue of
/// the projected `XᵀDX` is the estimate. `D` is indefinite, and the block keeps
/// eigenvalues of nearly equal magnitude and opposite sign from stalling the
/// iteration. Iteration stops once successive estimates agree to
/// [`POWER_ITERATION_TOL`] relative, or after [`POWER_ITERATION_CAP`] steps with
/// `converged = false`; in both cases the value is a lower bound on the exact
/// norm. An estimate below [`ROUNDOFF_FLOOR`] times `‖G‖_F² + ‖G_k‖_F²` is
/// rounding noise of an exact sketch and counts as converged.
pub fn operator_error(g: ArrayView2<'_, f64>, gk: ArrayView2<'_, f64>) -> Result<OperatorNorm> {
    let n = g.nrows();
    if gk.nrows() != n {
        return Err(Error::Shape(format!(
            "G has {n} rows but the sketch has {}",
            gk.nrows()
        )));
    }
    if n == 0 {
        return Ok(OperatorNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let apply = |x: &Array2<f64>| -> Array2<f64> { g.dot(&g.t().dot(x)) - gk.dot(&gk.t().dot(x)) };
    let floor = ROUNDOFF_FLOOR
        * (g.iter().map(|v| v * v).sum::<f64>() + gk.iter().map(|v| v * v).sum::<f64>());
    let width = POWER_BLOCK.min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut x = orthonormalize(&Array2::from_shape_simple_fn((n, width), || {
        rng.sample(StandardNormal)
    }));
    let mut estimate = 0.0;
    for it in 1..=POWER_ITERATION_CAP {
        let y = apply(&x);
        let projected = x.t().dot(&y);
        let sym = DMatrix::from_fn(width, width, |i, j| {
            0.5 * (projected[[i, j]] + projected[[j, i]])
        });
        let value = sym
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let change = (value - estimate).abs();
        estimate = value;
        if value == 0.0 && y.iter().all(|&v| v == 0.0) {
            return Ok(OperatorNorm {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        if it > 2 && (change <= POWER_ITERATION_TOL * value || value <= floor) {
            return Ok(OperatorNorm {
                value: estimate,
                iterations: it,
                converged: true,
            });
        }
        x = orthonormalize(&y);
    }
    Ok(OperatorNorm {
        value: estimate,
        iterations: POWER_ITERATION_CAP,
        converged: false,
    })
}

/// Orthonormal basis (thin Q factor) of the columns of `a`, `a.nrows() ≥ a.ncols()`.
fn orthonormalize(a: &Array2<f64>) -> Array2<f64> {
    let q = to_nalgebra(a.view()).qr().q();
    Array2::from_shape_fn(a.dim(), |(i, j)| q[(i, j)])
}

/// Hessian-free leaf score `‖Gᵀv_R‖² / (|R| + λ)` for the rows in `rows`.
pub fn leaf_score(g: ArrayView2<'_, f64>, rows: &[usize], lambda: f64) -> f64 {
    let mut sums = vec![0.0; g.ncols()];
    for &r in rows {
        for (s, &v) in sums.iter_mut().zip(g.row(r).iter()) {
            *s += v;
        }
    }
    sums.iter().map(|s| s * s).sum::<f64>() / (rows.len() as f64 + lambda)
}

/// Lower estimate of `sup_R |S_G(R) − S_{G_k}(R)|` over `n_leaves` random
/// nonempty leaves. Each leaf draws an inclusion rate uniformly from `(0, 1)`
/// and keeps every row independently at that rate.
pub fn empirical_sup_error(
    g: ArrayView2<'_, f64>,
    gk: ArrayView2<'_, f64>,
    n_leaves: usize,
    lambda: f64,
    seed: u64,
) -> Result<f64> {
    let n = g.nrows();
    if gk.nrows() != n {
        return Err(Error::Shape(format!(
            "G has {n} rows but the sketch has {}",
            gk.nrows()
        )));
    }
    if n_leaves == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one leaf and one row".into(),
        ));
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n_leaves {
        let rate: f64 = rng.random();
        rows.clear();
        rows.extend((0..n).filter(|_| rng.random::<f64>() < rate));
        if rows.is_empty() {
            rows.push(rng.random_range(0..n));
        }
        let diff = (leaf_score(g, &rows, lambda) - leaf_score(gk, &rows, lambda)).abs();
        worst = worst.max(diff);
    }
    Ok(worst)
}

/// `‖G‖²_F / ‖G‖²₂`.
pub fn stable_rank(g: ArrayView2<'_, f64>) -> Result<f64> {
    let fro2: f64 = g.iter().map(|v| v * v).sum();
    if fro2 == 0.0 {
        return Err(Error::InvalidArgument(
            "stable rank of a zero matrix".into(),
        ));
    }
    let spectral2 = operator_error(g, g.slice(s![.., ..0]))?.value;
    Ok(fro2 / spectral2)
}

/// Diagnostics comparing a sketch to its source matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub strategy: SketchStrategy,
    pub k: usize,
    pub empirical_sup_error: f64,
    /// `‖GGᵀ − G_kG_kᵀ‖₂` from [`operator_error`].
    pub operator_bound: f64,
    pub operator_converged: bool,
    /// Strategy-specific right-hand side: the dropped-column norm sum (top
    /// outputs), `σ²_{k+1}` (truncated SVD), or `C·‖G‖²/√k` with
    /// `δ = BOUND_DELTA` (random strategies; the projection constant `c` is
    /// unknown and taken as 1). Zero for `none`.
    pub strategy_bound: f64,
    pub stable_rank: f64,
}

/// Strategy-specific bound for `(G, k)`; see [`BoundReport::strategy_bound`].
pub fn strategy_bound(g: ArrayView2<'_, f64>, strategy: SketchStrategy, k: usize) -> Result<f64> {
    let fro2: f64 = g.iter().map(|v| v * v).sum();
    if fro2 == 0.0 {
        return Ok(0.0);
    }
    let probabilistic = |constant: f64, spectral2: f64| constant * spectral2 / (k as f64).sqrt();
    Ok(match strategy {
        SketchStrategy::None => 0.0,
        SketchStrategy::TopOutputs => {
            let norms = column_sq_norms(g);
            columns_by_norm(&norms)
                .iter()
                .skip(k)
                .map(|&i| norms[i])
                .sum()
        }
        SketchStrategy::TruncatedSvd => {
            let sv = singular_values(g)?;
            sv.get(k).map_or(0.0, |s| s * s)
        }
        SketchStrategy::RandomSampling => {
            let sr = stable_rank(g)?;
            let spectral2 = fro2 / sr;
            probabilistic(2.0 * (sr * (4.0 * sr / BOUND_DELTA).ln()).sqrt(), spectral2)
        }
        SketchStrategy::RandomProjection => {
            let sr = stable_rank(g)?;
            let spectral2 = fro2 / sr;
            probabilistic((sr + (1.0 / BOUND_DELTA).ln()).sqrt(), spectral2)
        }
    })
}

/// Builds a [`BoundReport`] for `sketch` of `g`.
pub fn bound_report(
    g: ArrayView2<'_, f64>,
    sketch: &Sketch,
    lambda: f64,
    n_leaves: usize,
    seed: u64,
) -> Result<BoundReport> {
    let op = operator_error(g, sketch.gk.view())?;
    let fro2: f64 = g.iter().map(|v| v * v).sum();
    Ok(BoundReport {
        strategy: sketch.strategy,
        k: sketch.k(),
        empirical_sup_error: empirical_sup_error(g, sketch.gk.view(), n_leaves, lambda, seed)?,
        operator_bound: op.value,
        operator_converged: op.converged,
        strategy_bound: strategy_bound(g, sketch.strategy, sketch.k())?,
        stable_rank: if fro2 == 0.0 { 0.0 } else { stable_rank(g)? },
    })
}
