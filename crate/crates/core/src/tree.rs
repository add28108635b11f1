//! Depth-wise growth of one multioutput tree.
//!
//! Structure search runs on the sketch columns only: histograms accumulate
//! per-bin sketch-gradient sums and counts, and a leaf is scored with the
//! Hessian-free `S(R) = Σ_j (Σ_{i∈R} g̃_ij)² / (|R| + λ)`. Once the structure
//! is fixed, leaf values are the diagonal Newton step on the full gradients
//! and Hessians, `v_j = −Σg_ij / (Σh_ij + λ)`.
//!
//! Routing rule: a row goes left when its bin code is `<=` the node threshold.
//! The missing-value bin is code 0, so missing values always go left.

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::GradHess;
use crate::quantize::{transform, BinMapper, BinnedMatrix};
use crate::sketch::Sketch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda_l2: f64,
    pub min_samples_leaf: usize,
    /// A split is taken only when its gain is strictly greater than this.
    pub min_gain: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            lambda_l2: 1.0,
            min_samples_leaf: 1,
            min_gain: 0.0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
        }
        if !(self.lambda_l2 > 0.0 && self.lambda_l2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda_l2 must be finite and > 0, got {}",
                self.lambda_l2
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument(
                "min_samples_leaf must be >= 1".into(),
            ));
        }
        if self.min_gain.is_nan() {
            return Err(Error::InvalidArgument("min_gain is NaN".into()));
        }
        Ok(())
    }
}

/// `Σ_j s_j² / (count + λ)`; zero for an empty leaf.
#[inline]
pub fn split_score(grad_sum: &[f64], count: usize, lambda: f64) -> f64 {
    if count == 0 {
        return 0.0;
    }
    grad_sum.iter().map(|s| s * s).sum::<f64>() / (count as f64 + lambda)
}

/// Row count and per-column gradient sums of a node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTotals {
    pub count: usize,
    pub grad_sum: Vec<f64>,
}

impl NodeTotals {
    /// Sums over `rows` of the scoring matrix.
    pub fn from_rows(gk: ArrayView2<'_, f64>, rows: &[usize]) -> Self {
        let mut grad_sum = vec![0.0; gk.ncols()];
        for &r in rows {
            for (s, &v) in grad_sum.iter_mut().zip(gk.row(r).iter()) {
                *s += v;
            }
        }
        Self {
            count: rows.len(),
            grad_sum,
        }
    }
}

/// Per-(feature, bin) counts and sketch-gradient sums of one node.
///
/// Feature `f` owns `bin_counts[f] + 1` consecutive slots (slot 0 is the
/// missing bin); each slot holds a count and `k` sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    k: usize,
    offsets: Vec<usize>,
    counts: Vec<u32>,
    sums: Vec<f64>,
}

impl Histogram {
    pub fn zeros(bin_counts: &[usize], k: usize) -> Self {
        let mut offsets = Vec::with_capacity(bin_counts.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for &b in bin_counts {
            total += b + 1;
            offsets.push(total);
        }
        Self {
            k,
            offsets,
            counts: vec![0; total],
            sums: vec![0.0; total * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Slots of `feature`, including the missing bin.
    pub fn n_slots(&self, feature: usize) -> usize {
        self.offsets[feature + 1] - self.offsets[feature]
    }

    pub fn count(&self, feature: usize, bin: usize) -> u32 {
        self.counts[self.offsets[feature] + bin]
    }

    pub fn sums(&self, feature: usize, bin: usize) -> &[f64] {
        let slot = self.offsets[feature] + bin;
        &self.sums[slot * self.k..(slot + 1) * self.k]
    }

    fn same_geometry(&self, other: &Histogram) -> bool {
        self.k == other.k && self.offsets == other.offsets
    }

    /// Turns `self` (a parent) into the sibling of `child` in place.
    pub fn subtract_in_place(&mut self, child: &Histogram) -> Result<()> {
        if !self.same_geometry(child) {
            return Err(Error::Histogram(
                "parent and child geometries differ".into(),
            ));
        }
        for (slot, (p, &c)) in self.counts.iter_mut().zip(&child.counts).enumerate() {
            *p = p.checked_sub(c).ok_or_else(|| {
                Error::Histogram(format!("child count exceeds parent count in slot {slot}"))
            })?;
        }
        for (p, &c) in self.sums.iter_mut().zip(&child.sums) {
            *p -= c;
        }
        Ok(())
    }
}

/// Counts and sketch-gradient sums over `rows`, for every feature and bin.
///
/// Work is split over blocks of features; every slot is summed in `rows`
/// order, so the result does not depend on the number of workers.
pub fn build_histograms(
    binned: &BinnedMatrix,
    gk: ArrayView2<'_, f64>,
    rows: &[usize],
) -> Result<Histogram> {
    if gk.nrows() != binned.n_rows() {
        return Err(Error::Shape(format!(
            "binned matrix has {} rows but the sketch has {}",
            binned.n_rows(),
            gk.nrows()
        )));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= binned.n_rows()) {
        return Err(Error::InvalidArgument(format!(
            "row index {r} out of range"
        )));
    }
    Ok(build_unchecked(
        binned,
        &gk.as_standard_layout().view(),
        rows,
    ))
}

fn build_unchecked(binned: &BinnedMatrix, gk: &ArrayView2<'_, f64>, rows: &[usize]) -> Histogram {
    let k = gk.ncols();
    let m = binned.n_features();
    let mut hist = Histogram::zeros(binned.bin_counts(), k);
    if rows.is_empty() || m == 0 {
        return hist;
    }
    let grads = gk.as_slice().expect("standard layout");

    let n_blocks = rayon::current_num_threads().clamp(1, m);
    let per_block = m.div_ceil(n_blocks);
    let offsets = &hist.offsets;
    let mut blocks = Vec::with_capacity(n_blocks);
    let (mut counts_rest, mut sums_rest) = (&mut hist.counts[..], &mut hist.sums[..]);
    let mut start = 0;
    while start < m {
        let end = (start + per_block).min(m);
        let slots = offsets[end] - offsets[start];
        let (c, cr) = counts_rest.split_at_mut(slots);
        let (s, sr) = sums_rest.split_at_mut(slots * k);
        blocks.push((start..end, c, s));
        counts_rest = cr;
        sums_rest = sr;
        start = end;
    }

    let fill = |(features, counts, sums): (std::ops::Range<usize>, &mut [u32], &mut [f64])| {
        let base = offsets[features.start];
        for &r in rows {
            let codes = binned.row(r);
            let g = &grads[r * k..(r + 1) * k];
            for f in features.clone() {
                let slot = offsets[f] - base + codes[f] as usize;
                counts[slot] += 1;
                for (acc, &v) in sums[slot * k..(slot + 1) * k].iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
    };
    if blocks.len() == 1 {
        blocks.into_iter().for_each(fill);
    } else {
        blocks.into_par_iter().for_each(fill);
    }
    hist
}

/// Sibling histogram as `parent − child`.
pub fn sibling_subtract(parent: &Histogram, child: &Histogram) -> Result<Histogram> {
    let mut out = parent.clone();
    out.subtract_in_place(child)?;
    Ok(out)
}

/// A chosen split: rows with `code <= threshold` on `feature` go left.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDecision {
    pub feature: usize,
    pub threshold: u8,
    pub gain: f64,
    pub left_count: usize,
    pub right_count: usize,
    /// Sketch-gradient sums of the left child.
    pub left_grad_sum: Vec<f64>,
}

fn best_split_for_feature(
    hist: &Histogram,
    feature: usize,
    totals: &NodeTotals,
    parent_score: f64,
    params: &TreeParams,
) -> Option<SplitDecision> {
    let k = hist.k;
    let lambda = params.lambda_l2;
    let mut left = vec![0.0; k];
    let mut right = vec![0.0; k];
    let mut left_count = 0usize;
    let mut best: Option<(f64, usize, usize, Vec<f64>)> = None;
    let slots = hist.n_slots(feature);
    for bin in 0..slots.saturating_sub(1) {
        left_count += hist.count(feature, bin) as usize;
        for (l, &s) in left.iter_mut().zip(hist.sums(feature, bin)) {
            *l += s;
        }
        let right_count = totals.count - left_count;
        if left_count < params.min_samples_leaf || right_count < params.min_samples_leaf {
            continue;
        }
        for ((r, &t), &l) in right.iter_mut().zip(&totals.grad_sum).zip(&left) {
            *r = t - l;
        }
        let gain = 0.5
            * (split_score(&left, left_count, lambda) + split_score(&right, right_count, lambda)
                - parent_score);
        if best.as_ref().is_none_or(|b| gain > b.0) {
            best = Some((gain, bin, left_count, left.clone()));
        }
    }
    best.map(|(gain, bin, left_count, left_grad_sum)| SplitDecision {
        feature,
        threshold: bin as u8,
        gain,
        left_count,
        right_count: totals.count - left_count,
        left_grad_sum,
    })
}

/// Best split of a node, maximizing `½(S(L) + S(R) − S(parent))`.
///
/// Every feature is scanned left to right over its bins (missing bin first).
/// Candidates must leave at least `min_samples_leaf` rows on each side and
/// have gain strictly above `min_gain`. Ties go to the lower feature index,
/// then the lower bin.
pub fn find_best_split(
    hist: &Histogram,
    totals: &NodeTotals,
    params: &TreeParams,
) -> Option<SplitDecision> {
    let parent_score = split_score(&totals.grad_sum, totals.count, params.lambda_l2);
    let per_feature: Vec<Option<SplitDecision>> = (0..hist.n_features())
        .into_par_iter()
        .map(|f| best_split_for_feature(hist, f, totals, parent_score, params))
        .collect();
    let mut best: Option<SplitDecision> = None;
    for candidate in per_feature.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| candidate.gain > b.gain) {
            best = Some(candidate);
        }
    }
    best.filter(|b| b.gain > params.min_gain)
}

/// Diagonal Newton leaf values on full gradients: `−Σg / (Σh + λ)` per output.
/// Returns one row per leaf.
pub fn fit_leaf_values(leaf_rows: &[Vec<usize>], gh: &GradHess, lambda: f64) -> Array2<f64> {
    let d = gh.n_outputs();
    let grad = gh.grad.as_standard_layout();
    let hess = gh.hess.as_standard_layout();
    let (grad, hess) = (
        grad.as_slice().expect("standard layout"),
        hess.as_slice().expect("standard layout"),
    );
    // One sequential sweep over rows; each leaf still sums its rows in
    // ascending order when `leaf_rows` lists them that way.
    let n_leaves = leaf_rows.len();
    let mut order: Vec<(usize, usize)> = leaf_rows
        .iter()
        .enumerate()
        .flat_map(|(leaf, rows)| rows.iter().map(move |&r| (r, leaf)))
        .collect();
    if order.windows(2).any(|w| w[0].0 > w[1].0) {
        order.sort_by_key(|&(r, _)| r);
    }
    let mut g = vec![0.0; n_leaves * d];
    let mut h = vec![0.0; n_leaves * d];
    for (r, leaf) in order {
        let row = r * d..(r + 1) * d;
        for (acc, &v) in g[leaf * d..(leaf + 1) * d]
            .iter_mut()
            .zip(&grad[row.clone()])
        {
            *acc += v;
        }
        for (acc, &v) in h[leaf * d..(leaf + 1) * d].iter_mut().zip(&hess[row]) {
            *acc += v;
        }
    }
    let values: Vec<f64> = g.iter().zip(&h).map(|(g, h)| -g / (h + lambda)).collect();
    Array2::from_shape_vec((n_leaves, d), values).expect("one row per leaf")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRef {
    Split(usize),
    Leaf(usize),
}

/// Internal node. Missing values (code 0) always route left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitNode {
    pub feature: usize,
    pub threshold: u8,
    pub left: NodeRef,
    pub right: NodeRef,
}

/// Binary tree with `d`-dimensional leaf values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    root: NodeRef,
    splits: Vec<SplitNode>,
    leaf_values: Array2<f64>,
    depth: usize,
}

impl Tree {
    /// Checks that `splits` and leaves form one rooted tree (every node
    /// reachable from `root` exactly once) and that leaf values are finite.
    pub fn new(root: NodeRef, splits: Vec<SplitNode>, leaf_values: Array2<f64>) -> Result<Self> {
        let n_leaves = leaf_values.nrows();
        let mut seen_splits = vec![false; splits.len()];
        let mut seen_leaves = vec![false; n_leaves];
        let mut depth = 0;
        let mut stack = vec![(root, 0usize)];
        while let Some((node, level)) = stack.pop() {
            match node {
                NodeRef::Leaf(id) => {
                    if id >= n_leaves || std::mem::replace(&mut seen_leaves[id], true) {
                        return Err(Error::CorruptModel(format!(
                            "leaf {id} is dangling or shared"
                        )));
                    }
                    depth = depth.max(level);
                }
                NodeRef::Split(id) => {
                    if id >= splits.len() || std::mem::replace(&mut seen_splits[id], true) {
                        return Err(Error::CorruptModel(format!(
                            "split {id} is dangling or shared"
                        )));
                    }
                    stack.push((splits[id].right, level + 1));
                    stack.push((splits[id].left, level + 1));
                }
            }
        }
        if seen_splits.contains(&false) || seen_leaves.contains(&false) {
            return Err(Error::CorruptModel("unreachable tree nodes".into()));
        }
        if leaf_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptModel("non-finite leaf value".into()));
        }
        Ok(Self {
            root,
            splits,
            leaf_values: leaf_values.as_standard_layout().into_owned(),
            depth,
        })
    }

    /// Single-leaf tree.
    pub fn constant(value: &[f64]) -> Self {
        Self {
            root: NodeRef::Leaf(0),
            splits: Vec::new(),
            leaf_values: Array2::from_shape_vec((1, value.len()), value.to_vec()).expect("one row"),
            depth: 0,
        }
    }

    pub fn root(&self) -> NodeRef {
        self.root
    }

    pub fn splits(&self) -> &[SplitNode] {
        &self.splits
    }

    pub fn leaf_values(&self) -> ArrayView2<'_, f64> {
        self.leaf_values.view()
    }

    pub fn leaf_value(&self, leaf: usize) -> ArrayView1<'_, f64> {
        self.leaf_values.row(leaf)
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_values.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.leaf_values.ncols()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Leaf reached by one row of bin codes.
    #[inline]
    pub fn leaf_for(&self, codes: &[u8]) -> usize {
        let mut node = self.root;
        loop {
            match node {
                NodeRef::Leaf(id) => return id,
                NodeRef::Split(id) => {
                    let s = &self.splits[id];
                    node = if codes[s.feature] <= s.threshold {
                        s.left
                    } else {
                        s.right
                    };
                }
            }
        }
    }

    pub fn leaf_indices(&self, binned: &BinnedMatrix) -> Vec<usize> {
        (0..binned.n_rows())
            .into_par_iter()
            .map(|i| self.leaf_for(binned.row(i)))
            .collect()
    }

    /// Leaf values for every row of an already binned matrix.
    pub fn predict_binned(&self, binned: &BinnedMatrix) -> Array2<f64> {
        let leaves = self.leaf_indices(binned);
        let mut out = Array2::zeros((binned.n_rows(), self.n_outputs()));
        for (mut row, &leaf) in out.rows_mut().into_iter().zip(&leaves) {
            row.assign(&self.leaf_values.row(leaf));
        }
        out
    }

    /// Largest feature index referenced by a split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.splits.iter().map(|s| s.feature).max()
    }
}

/// Bins raw features with `mapper` and routes every row.
pub fn predict_tree(
    tree: &Tree,
    features: ArrayView2<'_, f64>,
    mapper: &BinMapper,
) -> Result<Array2<f64>> {
    Ok(tree.predict_binned(&transform(features, mapper)?))
}

/// Wall time spent in each phase of tree growth.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GrowTimings {
    pub histogram: Duration,
    pub split: Duration,
    pub partition: Duration,
    pub leaf_fit: Duration,
}

impl std::ops::AddAssign for GrowTimings {
    fn add_assign(&mut self, rhs: Self) {
        self.histogram += rhs.histogram;
        self.split += rhs.split;
        self.partition += rhs.partition;
        self.leaf_fit += rhs.leaf_fit;
    }
}

/// A grown tree plus the training rows that landed in each leaf.
#[derive(Clone, Debug)]
pub struct GrownTree {
    pub tree: Tree,
    pub leaf_rows: Vec<Vec<usize>>,
    pub timings: GrowTimings,
}

enum Attach {
    Root,
    Left(usize),
    Right(usize),
}

struct Pending {
    rows: Vec<usize>,
    totals: NodeTotals,
    hist: Option<Histogram>,
    attach: Attach,
}

/// Grows one tree; see [`grow_tree_detailed`].
pub fn grow_tree(
    binned: &BinnedMatrix,
    gh: &GradHess,
    sketch: &Sketch,
    params: &TreeParams,
) -> Result<Tree> {
    Ok(grow_tree_detailed(binned, gh, sketch, params)?.tree)
}

/// Level-by-level growth to `max_depth`.
///
/// Every node of the current level either takes its best split or becomes a
/// leaf. Below a split, the histogram of the smaller child is built from its
/// rows and the larger child's is derived by subtraction from the parent.
/// Leaf values come from the full `(G, H)` once the structure is final.
pub fn grow_tree_detailed(
    binned: &BinnedMatrix,
    gh: &GradHess,
    sketch: &Sketch,
    params: &TreeParams,
) -> Result<GrownTree> {
    let scoring = sketch.scoring_matrix();
    grow_tree_scored(binned, gh, scoring.view(), params)
}

/// [`grow_tree_detailed`] with an explicit scoring matrix in place of a
/// sketch; passing `gh.grad` grows the unsketched tree.
pub fn grow_tree_scored(
    binned: &BinnedMatrix,
    gh: &GradHess,
    scoring: ArrayView2<'_, f64>,
    params: &TreeParams,
) -> Result<GrownTree> {
    params.validate()?;
    let n = binned.n_rows();
    if gh.n_rows() != n || gh.hess.dim() != gh.grad.dim() || scoring.nrows() != n {
        return Err(Error::Shape(format!(
            "row counts differ: binned {n}, gradients {}, scoring matrix {}",
            gh.n_rows(),
            scoring.nrows()
        )));
    }
    let gk = scoring.as_standard_layout();
    let gk = gk.view();
    let mut timings = GrowTimings::default();

    let all_rows: Vec<usize> = (0..n).collect();
    let started = Instant::now();
    let root_hist = build_unchecked(binned, &gk, &all_rows);
    timings.histogram += started.elapsed();
    let root_totals = NodeTotals::from_rows(gk, &all_rows);

    let mut splits: Vec<SplitNode> = Vec::new();
    let mut leaves: Vec<(Attach, Vec<usize>)> = Vec::new();
    let mut level = vec![Pending {
        rows: all_rows,
        totals: root_totals,
        hist: Some(root_hist),
        attach: Attach::Root,
    }];

    for depth in 0..params.max_depth {
        let mut next = Vec::with_capacity(level.len() * 2);
        for node in level {
            let Some(mut hist) = node.hist else {
                leaves.push((node.attach, node.rows));
                continue;
            };
            let started = Instant::now();
            let decision = find_best_split(&hist, &node.totals, params);
            timings.split += started.elapsed();
            let Some(split) = decision else {
                leaves.push((node.attach, node.rows));
                continue;
            };

            let id = splits.len();
            splits.push(SplitNode {
                feature: split.feature,
                threshold: split.threshold,
                left: NodeRef::Leaf(usize::MAX),
                right: NodeRef::Leaf(usize::MAX),
            });
            attach(&mut splits, &node.attach, NodeRef::Split(id));

            let started = Instant::now();
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = node
                .rows
                .iter()
                .partition(|&&r| binned.get(r, split.feature) <= split.threshold);
            timings.partition += started.elapsed();
            debug_assert_eq!(left_rows.len(), split.left_count);

            let left_totals = NodeTotals {
                count: split.left_count,
                grad_sum: split.left_grad_sum.clone(),
            };
            let right_totals = NodeTotals {
                count: split.right_count,
                grad_sum: node
                    .totals
                    .grad_sum
                    .iter()
                    .zip(&split.left_grad_sum)
                    .map(|(t, l)| t - l)
                    .collect(),
            };

            let (left_hist, right_hist) = if depth + 1 < params.max_depth {
                let started = Instant::now();
                let left_is_small = left_rows.len() <= right_rows.len();
                let small_rows = if left_is_small {
                    &left_rows
                } else {
                    &right_rows
                };
                let small = build_unchecked(binned, &gk, small_rows);
                hist.subtract_in_place(&small)?;
                timings.histogram += started.elapsed();
                if left_is_small {
                    (Some(small), Some(hist))
                } else {
                    (Some(hist), Some(small))
                }
            } else {
                (None, None)
            };

            next.push(Pending {
                rows: left_rows,
                totals: left_totals,
                hist: left_hist,
                attach: Attach::Left(id),
            });
            next.push(Pending {
                rows: right_rows,
                totals: right_totals,
                hist: right_hist,
                attach: Attach::Right(id),
            });
        }
        level = next;
    }
    for node in level {
        leaves.push((node.attach, node.rows));
    }

    let mut root = NodeRef::Leaf(0);
    let mut leaf_rows = Vec::with_capacity(leaves.len());
    for (leaf_id, (at, rows)) in leaves.into_iter().enumerate() {
        match at {
            Attach::Root => root = NodeRef::Leaf(leaf_id),
            other => attach(&mut splits, &other, NodeRef::Leaf(leaf_id)),
        }
        leaf_rows.push(rows);
    }
    if !splits.is_empty() {
        root = NodeRef::Split(0);
    }

    let started = Instant::now();
    let values = fit_leaf_values(&leaf_rows, gh, params.lambda_l2);
    timings.leaf_fit += started.elapsed();

    Ok(GrownTree {
        tree: Tree::new(root, splits, values)?,
        leaf_rows,
        timings,
    })
}

fn attach(splits: &mut [SplitNode], at: &Attach, node: NodeRef) {
    match *at {
        Attach::Root => {}
        Attach::Left(parent) => splits[parent].left = node,
        Attach::Right(parent) => splits[parent].right = node,
    }
}
