//! Gradient-boosted multioutput decision trees with sketched split search.
//!
//! Tree structure is searched on a low-dimensional sketch of the gradient
//! matrix while leaf values still use the full gradients and Hessians. The
//! crate covers the whole pipeline: CSV loading, quantile binning, losses,
//! sketch strategies with error bounds, tree growth, boosting with early
//! stopping, metrics, model files and a command-line front end.

pub mod bench;
pub mod booster;
pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model_store;
pub mod quantize;
pub mod sketch;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
