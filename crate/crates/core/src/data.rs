//! Tabular datasets: CSV loading, target encoding, train/validation splits and
//! the synthetic multiclass generator used by the scaling benchmark.
//!
//! Features are stored row-major as `f64` with `NaN` marking missing cells.
//! Multiclass targets are always one-hot rows; the CSV loader expands a dense
//! integer label column (`0..d`) into that form.

use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell contents treated as a missing feature value.
pub const NAN_TOKENS: [&str; 4] = ["", "NA", "NaN", "nan"];

/// Separation of class centroids (hypercube half-side) in the synthetic generator.
const CLASS_SEPARATION: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Multiclass,
    Multilabel,
    #[value(name = "multitask_regression", alias = "regression")]
    MultitaskRegression,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::MultitaskRegression)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Multiclass => "multiclass",
            TaskKind::Multilabel => "multilabel",
            TaskKind::MultitaskRegression => "multitask_regression",
        })
    }
}

/// Feature matrix, target matrix and the task they describe.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Array2<f64>,
    task: TaskKind,
}

impl Dataset {
    /// Validates shapes and per-task target invariants.
    pub fn new(features: Array2<f64>, targets: Array2<f64>, task: TaskKind) -> Result<Self> {
        let (n, m) = features.dim();
        let (nt, d) = targets.dim();
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::Shape(format!(
                "dataset needs n, m, d >= 1 (got n={n}, m={m}, d={d})"
            )));
        }
        if nt != n {
            return Err(Error::Shape(format!(
                "{n} feature rows but {nt} target rows"
            )));
        }
        validate_targets(targets.view(), task)?;
        Ok(Self {
            features: features.as_standard_layout().into_owned(),
            targets: targets.as_standard_layout().into_owned(),
            task,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn targets(&self) -> ArrayView2<'_, f64> {
        self.targets.view()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            task: self.task,
        }
    }

    /// Integer class labels recovered from one-hot multiclass targets.
    pub fn class_labels(&self) -> Option<Vec<usize>> {
        if self.task != TaskKind::Multiclass {
            return None;
        }
        Some(
            self.targets
                .rows()
                .into_iter()
                .map(|row| row.iter().position(|&v| v == 1.0).unwrap_or(0))
                .collect(),
        )
    }
}

pub(crate) fn validate_targets(targets: ArrayView2<'_, f64>, task: TaskKind) -> Result<()> {
    for (i, row) in targets.rows().into_iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NanTarget {
                row: i,
                column: j.to_string(),
            });
        }
        match task {
            TaskKind::Multiclass => {
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != row.len() {
                    return Err(Error::InvalidTarget(format!(
                        "multiclass row {i} is not one-hot"
                    )));
                }
            }
            TaskKind::Multilabel => {
                if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidTarget(format!(
                        "multilabel row {i} has an entry outside {{0, 1}}"
                    )));
                }
            }
            TaskKind::MultitaskRegression => {}
        }
    }
    Ok(())
}

fn parse_feature(raw: &str, row: usize, column: &str) -> Result<f64> {
    let cell = raw.trim();
    if NAN_TOKENS.contains(&cell) {
        return Ok(f64::NAN);
    }
    match cell.parse::<f64>() {
        // `str::parse` also accepts spellings such as "inf" or "NAN"; only the
        // listed tokens may produce a non-finite value.
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn parse_target(raw: &str, row: usize, column: &str) -> Result<f64> {
    let cell = raw.trim();
    if NAN_TOKENS.contains(&cell) {
        return Err(Error::NanTarget {
            row,
            column: column.to_string(),
        });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

struct CsvTable {
    names: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_table(path: &Path, has_header: bool) -> Result<CsvTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .from_reader(std::io::BufReader::new(file));
    let mut names: Vec<String> = if has_header {
        reader
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect()
    } else {
        Vec::new()
    };
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if !has_header {
        let width = records.first().map_or(0, |r| r.len());
        names = (0..width).map(|i| i.to_string()).collect();
    }
    Ok(CsvTable { names, records })
}

fn column_index(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

/// Loads a CSV file into a [`Dataset`].
///
/// `target_columns` names the target columns (0-based indices as strings when
/// the file has no header). For [`TaskKind::Multiclass`] a single column is
/// read as a dense integer label and one-hot expanded to `max label + 1`
/// outputs; several columns are taken as an already one-hot encoding. All
/// remaining columns become features, in file order.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_columns: &[&str],
    task: TaskKind,
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    if target_columns.is_empty() {
        return Err(Error::InvalidArgument("no target column given".into()));
    }
    let table = read_table(path, has_header)?;
    let target_idx = target_columns
        .iter()
        .map(|name| column_index(&table.names, name))
        .collect::<Result<Vec<_>>>()?;
    let feature_idx: Vec<usize> = (0..table.names.len())
        .filter(|i| !target_idx.contains(i))
        .collect();

    let n = table.records.len();
    let m = feature_idx.len();
    let mut features = Vec::with_capacity(n * m);
    let mut raw_targets = Vec::with_capacity(n * target_idx.len());
    for (i, record) in table.records.iter().enumerate() {
        if record.len() != table.names.len() {
            return Err(Error::Shape(format!(
                "row {i} has {} fields, expected {}",
                record.len(),
                table.names.len()
            )));
        }
        for &j in &feature_idx {
            features.push(parse_feature(&record[j], i, &table.names[j])?);
        }
        for &j in &target_idx {
            raw_targets.push(parse_target(&record[j], i, &table.names[j])?);
        }
    }
    let features =
        Array2::from_shape_vec((n, m), features).map_err(|e| Error::Shape(e.to_string()))?;

    let targets = if task == TaskKind::Multiclass && target_idx.len() == 1 {
        let name = &table.names[target_idx[0]];
        let mut labels = Vec::with_capacity(n);
        for (i, &v) in raw_targets.iter().enumerate() {
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(Error::InvalidTarget(format!(
                    "row {i}, column `{name}`: class label {v} is not a non-negative integer"
                )));
            }
            labels.push(v as usize);
        }
        one_hot(&labels, labels.iter().max().map_or(0, |&c| c + 1))
    } else {
        Array2::from_shape_vec((n, target_idx.len()), raw_targets)
            .map_err(|e| Error::Shape(e.to_string()))?
    };
    Dataset::new(features, targets, task)
}

/// Loads only feature columns, skipping `drop_columns` (e.g. targets present
/// in the file). Used for prediction.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    drop_columns: &[&str],
    has_header: bool,
) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let table = read_table(path, has_header)?;
    let drop_idx = drop_columns
        .iter()
        .map(|name| column_index(&table.names, name))
        .collect::<Result<Vec<_>>>()?;
    let feature_idx: Vec<usize> = (0..table.names.len())
        .filter(|i| !drop_idx.contains(i))
        .collect();
    let mut features = Vec::with_capacity(table.records.len() * feature_idx.len());
    for (i, record) in table.records.iter().enumerate() {
        if record.len() != table.names.len() {
            return Err(Error::Shape(format!(
                "row {i} has {} fields, expected {}",
                record.len(),
                table.names.len()
            )));
        }
        for &j in &feature_idx {
            features.push(parse_feature(&record[j], i, &table.names[j])?);
        }
    }
    Array2::from_shape_vec((table.records.len(), feature_idx.len()), features)
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Writes a dataset as CSV with header `f0..f{m-1}` followed by either a
/// `label` column (multiclass) or `y0..y{d-1}`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut header: Vec<String> = (0..ds.n_features()).map(|j| format!("f{j}")).collect();
    let labels = ds.class_labels();
    if labels.is_some() {
        header.push("label".into());
    } else {
        header.extend((0..ds.n_outputs()).map(|j| format!("y{j}")));
    }
    let io_err = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        let mut cells: Vec<String> = row
            .iter()
            .map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    v.to_string()
                }
            })
            .collect();
        match &labels {
            Some(labels) => cells.push(labels[i].to_string()),
            None => cells.extend(ds.targets.row(i).iter().map(|v| v.to_string())),
        }
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub(crate) fn one_hot(labels: &[usize], n_classes: usize) -> Array2<f64> {
    let mut targets = Array2::zeros((labels.len(), n_classes));
    for (i, &c) in labels.iter().enumerate() {
        targets[[i, c]] = 1.0;
    }
    targets
}

/// Number of validation rows: `round(fraction * n)` clamped to `[1, n - 1]`.
pub fn valid_size(n: usize, valid_fraction: f64) -> usize {
    ((valid_fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Seeded row shuffle into disjoint (train, valid) parts. Each part keeps the
/// original row order.
pub fn split_train_valid(
    ds: &Dataset,
    valid_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train_idx, valid_idx) = split_indices(ds.n_rows(), valid_fraction, seed)?;
    Ok((ds.select_rows(&train_idx), ds.select_rows(&valid_idx)))
}

/// Index form of [`split_train_valid`].
pub fn split_indices(n: usize, valid_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to split, got {n}"
        )));
    }
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "valid_fraction must lie in (0, 1), got {valid_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = valid_size(n, valid_fraction);
    let mut valid = order[..n_valid].to_vec();
    let mut train = order[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    Ok((train, valid))
}

/// Multiclass data with Gaussian clusters around hypercube vertices.
///
/// Each class centroid is a distinct random vertex of `{-2, +2}^n_informative`.
/// With more classes than vertices, vertices may repeat and every centroid
/// gets a unit Gaussian offset. A point is its class
/// centroid plus unit Gaussian noise on the informative coordinates; the
/// remaining features are pure unit noise. Labels cycle through the classes so
/// class counts differ by at most one, then rows are shuffled.
pub fn generate_synthetic(
    n_rows: usize,
    n_features: usize,
    n_informative: usize,
    n_classes: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_rows == 0 || n_features == 0 {
        return Err(Error::InvalidArgument(
            "n_rows and n_features must be >= 1".into(),
        ));
    }
    if n_informative == 0 || n_informative > n_features {
        return Err(Error::InvalidArgument(format!(
            "n_informative must lie in [1, n_features], got {n_informative}"
        )));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_classes must be >= 2, got {n_classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let distinct_vertices = n_informative >= 63 || (n_classes as u64) <= (1u64 << n_informative);
    let mut used = std::collections::HashSet::new();
    let mut centroids = Array2::<f64>::zeros((n_classes, n_informative));
    for mut centroid in centroids.rows_mut() {
        let vertex: Vec<bool> = loop {
            let v: Vec<bool> = (0..n_informative).map(|_| rng.random()).collect();
            if !distinct_vertices || used.insert(v.clone()) {
                break v;
            }
        };
        for (c, &positive) in centroid.iter_mut().zip(&vertex) {
            *c = if positive {
                CLASS_SEPARATION
            } else {
                -CLASS_SEPARATION
            };
            if !distinct_vertices {
                *c += rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    let mut labels: Vec<usize> = (0..n_rows).map(|i| i % n_classes).collect();
    labels.shuffle(&mut rng);

    let mut features = Array2::<f64>::zeros((n_rows, n_features));
    for (mut row, &label) in features.rows_mut().into_iter().zip(&labels) {
        for (j, x) in row.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *x = if j < n_informative {
                centroids[[label, j]] + noise
            } else {
                noise
            };
        }
    }
    Dataset::new(features, one_hot(&labels, n_classes), TaskKind::Multiclass)
}
