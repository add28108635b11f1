//! JSON model files.
//!
//! Every float (learning rate, bin thresholds, leaf values, recorded losses) is
//! written as the 16-hex-digit pattern of its IEEE-754 bits, so a loaded model
//! predicts bit-identically to the saved one. Output is a pure function of the
//! model: the same model always serializes to the same bytes.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::booster::{Model, TrainingHistory};
use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::quantize::BinMapper;
use crate::tree::{NodeRef, SplitNode, Tree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    task: TaskKind,
    n_outputs: usize,
    n_features: usize,
    learning_rate: String,
    bin_thresholds: Vec<Vec<String>>,
    trees: Vec<TreeFile>,
    training: HistoryFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    root: NodeRef,
    splits: Vec<SplitFile>,
    leaf_values: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitFile {
    feature: usize,
    threshold: u8,
    left: NodeRef,
    right: NodeRef,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryFile {
    train_loss: Vec<String>,
    valid_loss: Vec<String>,
    best_iteration: Option<usize>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// IEEE-754 bits of `v` as 16 lowercase hex digits.
pub fn encode_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

/// Inverse of [`encode_f64`]; exactly 16 hex digits are required.
pub fn decode_f64(s: &str) -> Result<f64> {
    if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::CorruptModel(format!(
            "float field {s:?} is not 16 hex digits"
        )));
    }
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| Error::CorruptModel(format!("float field {s:?}: {e}")))
}

fn encode_all(values: impl IntoIterator<Item = f64>) -> Vec<String> {
    values.into_iter().map(encode_f64).collect()
}

fn decode_all(values: &[String]) -> Result<Vec<f64>> {
    values.iter().map(|s| decode_f64(s)).collect()
}

fn to_file(model: &Model) -> ModelFile {
    let mapper = model.mapper();
    let history = model.history();
    ModelFile {
        format_version: FORMAT_VERSION,
        task: model.task(),
        n_outputs: model.n_outputs(),
        n_features: model.n_features(),
        learning_rate: encode_f64(model.learning_rate()),
        bin_thresholds: (0..mapper.n_features())
            .map(|f| encode_all(mapper.thresholds(f).iter().copied()))
            .collect(),
        trees: model
            .trees()
            .iter()
            .map(|t| TreeFile {
                root: t.root(),
                splits: t
                    .splits()
                    .iter()
                    .map(|s| SplitFile {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: s.left,
                        right: s.right,
                    })
                    .collect(),
                leaf_values: t
                    .leaf_values()
                    .rows()
                    .into_iter()
                    .map(|r| encode_all(r.iter().copied()))
                    .collect(),
            })
            .collect(),
        training: HistoryFile {
            train_loss: encode_all(history.train_loss.iter().copied()),
            valid_loss: encode_all(history.valid_loss.iter().copied()),
            best_iteration: history.best_iteration,
        },
    }
}

fn from_file(file: ModelFile) -> Result<Model> {
    let thresholds = file
        .bin_thresholds
        .iter()
        .map(|t| decode_all(t))
        .collect::<Result<Vec<_>>>()?;
    let mapper = BinMapper::from_thresholds(thresholds)
        .map_err(|e| Error::CorruptModel(format!("bin thresholds: {e}")))?;
    if mapper.n_features() != file.n_features {
        return Err(Error::CorruptModel(format!(
            "n_features is {} but {} threshold lists are stored",
            file.n_features,
            mapper.n_features()
        )));
    }
    let d = file.n_outputs;
    let mut trees = Vec::with_capacity(file.trees.len());
    for (t, tree) in file.trees.into_iter().enumerate() {
        let mut values = Vec::with_capacity(tree.leaf_values.len() * d);
        for (leaf, row) in tree.leaf_values.iter().enumerate() {
            if row.len() != d {
                return Err(Error::CorruptModel(format!(
                    "tree {t} leaf {leaf} has {} values, expected {d}",
                    row.len()
                )));
            }
            values.extend(decode_all(row)?);
        }
        let values = Array2::from_shape_vec((tree.leaf_values.len(), d), values)
            .map_err(|e| Error::CorruptModel(format!("tree {t}: {e}")))?;
        let splits = tree
            .splits
            .into_iter()
            .map(|s| SplitNode {
                feature: s.feature,
                threshold: s.threshold,
                left: s.left,
                right: s.right,
            })
            .collect();
        let tree = Tree::new(tree.root, splits, values).map_err(|e| match e {
            Error::CorruptModel(msg) => Error::CorruptModel(format!("tree {t}: {msg}")),
            other => other,
        })?;
        trees.push(tree);
    }
    let history = TrainingHistory {
        train_loss: decode_all(&file.training.train_loss)?,
        valid_loss: decode_all(&file.training.valid_loss)?,
        best_iteration: file.training.best_iteration,
    };
    Model::new(
        trees,
        decode_f64(&file.learning_rate)?,
        mapper,
        file.task,
        d,
        history,
    )
}

/// Serializes `model` as pretty-printed JSON.
pub fn to_json_string(model: &Model) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&to_file(model))?;
    s.push('\n');
    Ok(s)
}

/// Parses and validates a model document. The version is checked before the
/// rest of the schema.
pub fn from_json_str(s: &str) -> Result<Model> {
    let probe: VersionProbe = serde_json::from_str(s)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    from_file(serde_json::from_str(s)?)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text)
}
