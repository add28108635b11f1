//! Training-time scaling benchmark over class counts and sketch strategies.
//!
//! Every configuration is trained twice, for `T` and `2T` trees, and the
//! reported cost is `time(2T) − time(T)` scaled to 100 trees. Differencing
//! removes setup work (binning, allocation) that does not grow with `T`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::booster::{train, BoostParams};
use crate::data::generate_synthetic;
use crate::error::{Error, Result};
use crate::sketch::SketchStrategy;
use crate::tree::TreeParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub classes: Vec<usize>,
    pub rows: usize,
    pub features: usize,
    pub informative: usize,
    pub depth: usize,
    /// `T`; each configuration trains `T` and `2T` trees.
    pub trees: usize,
    pub strategies: Vec<SketchStrategy>,
    pub k: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            classes: vec![5, 10, 25, 50, 100],
            rows: 50_000,
            features: 20,
            informative: 10,
            depth: 6,
            trees: 100,
            strategies: vec![SketchStrategy::None, SketchStrategy::RandomProjection],
            k: 5,
            learning_rate: 0.01,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.strategies.is_empty() {
            return Err(Error::InvalidArgument("empty benchmark grid".into()));
        }
        if self.classes.iter().any(|&c| c < 2) {
            return Err(Error::InvalidArgument("class counts must be >= 2".into()));
        }
        if self.trees == 0 || self.rows < 2 || self.features == 0 {
            return Err(Error::InvalidArgument(
                "trees, rows and features must be positive".into(),
            ));
        }
        if self.k == 0 && self.strategies.iter().any(|&s| s != SketchStrategy::None) {
            return Err(Error::InvalidArgument(
                "sketch strategies need k >= 1".into(),
            ));
        }
        Ok(())
    }

    fn params(&self, strategy: SketchStrategy, n_trees: usize) -> BoostParams {
        BoostParams {
            n_trees,
            learning_rate: self.learning_rate,
            tree: TreeParams {
                max_depth: self.depth,
                lambda_l2: self.lambda,
                ..TreeParams::default()
            },
            sketch: strategy,
            k: self.k,
            early_stopping_rounds: 0,
            seed: self.seed,
            ..BoostParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub classes: usize,
    pub strategy: SketchStrategy,
    /// Sketch width used; equals the class count for `none`.
    pub k: usize,
    /// Seconds per 100 trees.
    pub seconds: f64,
}

/// Runs the grid class count by class count; `progress` sees every row as it
/// completes.
pub fn run_bench(
    config: &BenchConfig,
    mut progress: impl FnMut(&BenchRow),
) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &classes in &config.classes {
        let ds = generate_synthetic(
            config.rows,
            config.features,
            config.informative,
            classes,
            config.seed,
        )?;
        for &strategy in &config.strategies {
            let time = |n_trees: usize| -> Result<f64> {
                let started = Instant::now();
                train(&ds, None, &config.params(strategy, n_trees))?;
                Ok(started.elapsed().as_secs_f64())
            };
            let single = time(config.trees)?;
            let double = time(2 * config.trees)?;
            let k = match strategy {
                SketchStrategy::None => classes,
                _ => config.k.min(classes),
            };
            let row = BenchRow {
                classes,
                strategy,
                k,
                seconds: (double - single).max(0.0) * 100.0 / config.trees as f64,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// CSV with header `classes,strategy,k,seconds`.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("classes,strategy,k,seconds\n");
    for r in rows {
        writeln!(out, "{},{},{},{:.6}", r.classes, r.strategy, r.k, r.seconds)
            .expect("string write");
    }
    out
}

pub fn write_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv(rows)).map_err(|e| Error::io(path, e))
}

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Line plot of seconds per 100 trees against class count, one line per
/// strategy.
pub fn render_svg(rows: &[BenchRow]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 70.0, 150.0, 30.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max_x = rows.iter().map(|r| r.classes).max().unwrap_or(1).max(1) as f64;
    let max_y = rows
        .iter()
        .map(|r| r.seconds)
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.1;
    let px = |x: f64| left + plot_w * x / max_x;
    let py = |y: f64| top + plot_h * (1.0 - y / max_y);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    )
    .unwrap();
    for i in 0..=4 {
        let y = max_y * f64::from(i) / 4.0;
        writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            left - 6.0,
            py(y) + 4.0,
            y
        )
        .unwrap();
    }
    let mut classes: Vec<usize> = rows.iter().map(|r| r.classes).collect();
    classes.sort_unstable();
    classes.dedup();
    for c in &classes {
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{c}</text>"#,
            px(*c as f64),
            top + plot_h + 18.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">classes</text>"#,
        left + plot_w / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">seconds per 100 trees</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    )
    .unwrap();

    let mut strategies: Vec<SketchStrategy> = Vec::new();
    for r in rows {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    for (i, s) in strategies.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points: Vec<&BenchRow> = rows.iter().filter(|r| r.strategy == *s).collect();
        points.sort_by_key(|r| r.classes);
        let path: Vec<String> = points
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let cmd = if j == 0 { 'M' } else { 'L' };
                format!("{cmd}{:.1},{:.1}", px(r.classes as f64), py(r.seconds))
            })
            .collect();
        writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        )
        .unwrap();
        for r in &points {
            writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                px(r.classes as f64),
                py(r.seconds)
            )
            .unwrap();
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{s}</text>"#,
            w - right + 15.0,
            w - right + 35.0,
            w - right + 40.0,
            ly + 4.0
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
