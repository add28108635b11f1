//! Quantile binning of continuous features into at most 255 real bins plus a
//! reserved missing-value bin.
//!
//! Bin codes are `u8`: code `0` holds `NaN`, codes `1..=bins` hold finite
//! values. A finite value `v` gets code `1 + #{thresholds < v}`, so bin `c`
//! covers `(t[c-2], t[c-1]]` and values outside the training range clamp into
//! the first or last real bin.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of real (non-missing) bins per feature.
pub const MAX_REAL_BINS: usize = 255;

/// Code reserved for missing values.
pub const NAN_BIN: u8 = 0;

/// Per-feature bin thresholds fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    thresholds: Vec<Vec<f64>>,
}

impl BinMapper {
    /// Builds a mapper from explicit thresholds, checking they are finite and
    /// strictly increasing.
    pub fn from_thresholds(thresholds: Vec<Vec<f64>>) -> Result<Self> {
        for (f, t) in thresholds.iter().enumerate() {
            if t.len() >= MAX_REAL_BINS {
                return Err(Error::InvalidArgument(format!(
                    "feature {f} has {} thresholds (at most {})",
                    t.len(),
                    MAX_REAL_BINS - 1
                )));
            }
            if t.iter().any(|v| !v.is_finite()) || t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "feature {f} thresholds must be finite and strictly increasing"
                )));
            }
        }
        Ok(Self { thresholds })
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self, feature: usize) -> &[f64] {
        &self.thresholds[feature]
    }

    /// Real bins of `feature` (excluding the missing bin).
    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    pub fn bin_counts(&self) -> Vec<usize> {
        (0..self.n_features()).map(|f| self.n_bins(f)).collect()
    }

    #[inline]
    pub fn code(&self, feature: usize, value: f64) -> u8 {
        if value.is_nan() {
            NAN_BIN
        } else {
            1 + self.thresholds[feature].partition_point(|&t| t < value) as u8
        }
    }
}

/// Row-major matrix of bin codes.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedMatrix {
    codes: Vec<u8>,
    n_rows: usize,
    bin_counts: Vec<usize>,
}

impl BinnedMatrix {
    /// Wraps raw row-major codes; every code must be `<= bin_counts[feature]`.
    pub fn from_codes(codes: Vec<u8>, n_rows: usize, bin_counts: Vec<usize>) -> Result<Self> {
        let m = bin_counts.len();
        if codes.len() != n_rows * m {
            return Err(Error::Shape(format!(
                "{} codes for a {n_rows}x{m} matrix",
                codes.len()
            )));
        }
        if bin_counts.iter().any(|&b| b == 0 || b > MAX_REAL_BINS) {
            return Err(Error::InvalidArgument(
                "bin counts must lie in [1, 255]".into(),
            ));
        }
        if let Some(pos) = codes
            .iter()
            .enumerate()
            .position(|(i, &c)| c as usize > bin_counts[i % m])
        {
            return Err(Error::InvalidArgument(format!(
                "code {} at row {}, feature {} exceeds the bin count",
                codes[pos],
                pos / m,
                pos % m
            )));
        }
        Ok(Self {
            codes,
            n_rows,
            bin_counts,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.bin_counts.len()
    }

    /// Real bins per feature; valid codes for feature `f` are `0..=bin_counts[f]`.
    pub fn bin_counts(&self) -> &[usize] {
        &self.bin_counts
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        let m = self.n_features();
        &self.codes[i * m..(i + 1) * m]
    }

    #[inline]
    pub fn get(&self, row: usize, feature: usize) -> u8 {
        self.codes[row * self.n_features() + feature]
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }
}

/// Fits quantile thresholds per feature.
///
/// With `N` non-missing values sorted as `x`, `B = min(max_bins, distinct)`,
/// the `q/B` quantile (`q = 1..B`) is `a = x[ceil(qN/B) - 1]`; the threshold is
/// the midpoint between `a` and the next larger distinct value. Duplicates are
/// dropped, so every real bin holds at least one training value.
pub fn fit_bins(features: ArrayView2<'_, f64>, max_bins: usize) -> Result<BinMapper> {
    if !(1..=MAX_REAL_BINS).contains(&max_bins) {
        return Err(Error::InvalidArgument(format!(
            "max_bins must lie in [1, {MAX_REAL_BINS}], got {max_bins}"
        )));
    }
    let columns: Vec<Vec<f64>> = features.columns().into_iter().map(|c| c.to_vec()).collect();
    let thresholds = columns
        .into_par_iter()
        .map(|column| feature_thresholds(column, max_bins))
        .collect();
    Ok(BinMapper { thresholds })
}

fn feature_thresholds(mut values: Vec<f64>, max_bins: usize) -> Vec<f64> {
    values.retain(|v| !v.is_nan());
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let distinct = 1 + values.windows(2).filter(|w| w[0] != w[1]).count();
    let bins = max_bins.min(distinct);
    let mut thresholds: Vec<f64> = Vec::with_capacity(bins.saturating_sub(1));
    for q in 1..bins {
        let idx = (q * n).div_ceil(bins) - 1;
        let below = values[idx];
        let next = idx + values[idx..].partition_point(|&v| v <= below);
        if next >= n {
            continue;
        }
        let above = values[next];
        let mut t = below + (above - below) / 2.0;
        if t >= above {
            t = below;
        }
        if thresholds.last().is_none_or(|&last| t > last) {
            thresholds.push(t);
        }
    }
    thresholds
}

/// Applies a fitted mapper.
pub fn transform(features: ArrayView2<'_, f64>, mapper: &BinMapper) -> Result<BinnedMatrix> {
    let (n, m) = features.dim();
    if m != mapper.n_features() {
        return Err(Error::Shape(format!(
            "mapper was fitted on {} features, got {m}",
            mapper.n_features()
        )));
    }
    let mut codes = vec![0u8; n * m];
    if m > 0 {
        codes
            .par_chunks_mut(m)
            .zip(features.outer_iter().into_par_iter())
            .for_each(|(out, row)| {
                for (f, (c, &v)) in out.iter_mut().zip(row.iter()).enumerate() {
                    *c = mapper.code(f, v);
                }
            });
    }
    Ok(BinnedMatrix {
        codes,
        n_rows: n,
        bin_counts: mapper.bin_counts(),
    })
}
