//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Criteria run sequentially so the timing
//! criterion is not disturbed by concurrent work.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sketchtree::bench::{run_bench, BenchConfig, BenchRow};
use sketchtree::booster::{predict_raw, train, BoostParams};
use sketchtree::data::{generate_synthetic, split_train_valid, write_csv, Dataset, TaskKind};
use sketchtree::loss::{grad_hess_mse, grad_hess_sigmoid_bce, grad_hess_softmax};
use sketchtree::metrics::evaluate;
use sketchtree::model_store::{from_json_str, to_json_string};
use sketchtree::quantize::{fit_bins, transform, BinnedMatrix};
use sketchtree::sketch::{
    build_sketch, empirical_sup_error, operator_error, random_projection, random_sampling,
    SketchStrategy,
};
use sketchtree::tree::{
    build_histograms, find_best_split, fit_leaf_values, grow_tree_detailed, NodeRef, NodeTotals,
    SplitDecision, TreeParams,
};
use sketchtree::verify::{verify_bounds, VerifyConfig};

// Tolerances.
const SPLIT_GAIN_REL_TOL: f64 = 1e-9;
const LEAF_GRAD_TOL: f64 = 1e-9;
const SCORE_BOUND_SLACK: f64 = 1e-9;
const SVD_EQ_TOL: f64 = 1e-8;
const MC_DRAWS: u64 = 20_000;
const MC_STANDARD_ERRORS: f64 = 5.0;
const FD_GRAD_TOL: f64 = 1e-6;
const FD_HESS_TOL: f64 = 1e-5;
const MIN_SPEEDUP: f64 = 3.0;
const QUALITY_REL_TOL: f64 = 0.10;

// Runtime budgets.
const SPLIT_ORACLE_BUDGET: Duration = Duration::from_secs(60);
const TIMING_BUDGET: Duration = Duration::from_secs(20 * 60);
const QUALITY_BUDGET: Duration = Duration::from_secs(10 * 60);

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// 1. Exhaustive split oracle

/// Best split by re-partitioning rows and summing raw gradient rows for every
/// candidate. Ties keep the first candidate in (feature, bin) order.
fn brute_force_split(
    binned: &BinnedMatrix,
    g: ArrayView2<'_, f64>,
    rows: &[usize],
    params: &TreeParams,
) -> Option<(usize, u8, f64)> {
    let score = |subset: &[usize]| -> f64 {
        if subset.is_empty() {
            return 0.0;
        }
        let mut sums = vec![0.0; g.ncols()];
        for &r in subset {
            for (s, v) in sums.iter_mut().zip(g.row(r)) {
                *s += v;
            }
        }
        sums.iter().map(|s| s * s).sum::<f64>() / (subset.len() as f64 + params.lambda_l2)
    };
    let parent = score(rows);
    let mut best: Option<(usize, u8, f64)> = None;
    for f in 0..binned.n_features() {
        for b in 0..binned.bin_counts()[f] {
            let (left, right): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&r| usize::from(binned.get(r, f)) <= b);
            if left.len() < params.min_samples_leaf || right.len() < params.min_samples_leaf {
                continue;
            }
            let gain = 0.5 * (score(&left) + score(&right) - parent);
            if best.is_none_or(|(_, _, bg)| gain > bg) {
                best = Some((f, b as u8, gain));
            }
        }
    }
    best.filter(|&(_, _, gain)| gain > params.min_gain)
}

fn criterion_split_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut nodes, mut splits, mut mismatches) = (0, 0, Vec::new());
    let mut worst_rel: f64 = 0.0;
    for instance in 0..50 {
        let n = rng.random_range(20..=200);
        let m = rng.random_range(1..=5);
        let d = rng.random_range(1..=3);
        let max_bins = rng.random_range(2..=15);
        let depth = rng.random_range(1..=2);
        let nan_rate = if rng.random_bool(0.5) { 0.1 } else { 0.0 };
        let x = Array2::from_shape_simple_fn((n, m), || {
            if rng.random::<f64>() < nan_rate {
                f64::NAN
            } else {
                rng.sample(StandardNormal)
            }
        });
        let g = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let h = Array2::from_shape_simple_fn((n, d), || rng.random_range(0.05..1.0));
        let params = TreeParams {
            max_depth: depth,
            lambda_l2: rng.random_range(0.1..2.0),
            min_samples_leaf: rng.random_range(1..=3),
            min_gain: if rng.random_bool(0.3) {
                rng.random_range(0.0..4.0)
            } else {
                0.0
            },
        };
        let mapper = fit_bins(x.view(), max_bins).unwrap();
        let binned = transform(x.view(), &mapper).unwrap();
        let gh = sketchtree::loss::GradHess {
            grad: g.clone(),
            hess: h,
        };
        let sketch = build_sketch(g.view(), SketchStrategy::None, 0, 0).unwrap();
        let grown = grow_tree_detailed(&binned, &gh, &sketch, &params).unwrap();
        let tree = &grown.tree;

        // Walk the tree, checking every node above the depth limit.
        let mut stack = vec![(tree.root(), (0..n).collect::<Vec<usize>>(), 0usize)];
        while let Some((node, rows, level)) = stack.pop() {
            if level == depth {
                continue;
            }
            nodes += 1;
            let hist = build_histograms(&binned, g.view(), &rows).unwrap();
            let totals = NodeTotals::from_rows(g.view(), &rows);
            let decision: Option<SplitDecision> = find_best_split(&hist, &totals, &params);
            let oracle = brute_force_split(&binned, g.view(), &rows, &params);
            let tree_split = match node {
                NodeRef::Split(id) => Some(tree.splits()[id]),
                NodeRef::Leaf(_) => None,
            };
            let agree = match (&decision, oracle, tree_split) {
                (None, None, None) => true,
                (Some(dec), Some((of, ob, og)), Some(ts)) => {
                    let rel = rel_diff(dec.gain, og);
                    worst_rel = worst_rel.max(rel);
                    dec.feature == of
                        && dec.threshold == ob
                        && rel <= SPLIT_GAIN_REL_TOL
                        && ts.feature == of
                        && ts.threshold == ob
                }
                _ => false,
            };
            if !agree {
                mismatches.push(format!(
                    "instance {instance} level {level}: library {:?} oracle {oracle:?} tree {:?}",
                    decision.map(|d| (d.feature, d.threshold, d.gain)),
                    tree_split.map(|s| (s.feature, s.threshold))
                ));
            }
            if let Some(ts) = tree_split {
                splits += 1;
                let (left, right): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| binned.get(r, ts.feature) <= ts.threshold);
                stack.push((ts.left, left, level + 1));
                stack.push((ts.right, right, level + 1));
            }
        }
    }
    let elapsed = started.elapsed();
    let passed = mismatches.is_empty() && elapsed < SPLIT_ORACLE_BUDGET;
    let mut detail = format!(
        "50 instances, {nodes} nodes checked, {splits} splits, {} leaves, {} mismatches, max rel gain diff {worst_rel:.1e}, {:.2}s (budget {}s)",
        nodes - splits,
        mismatches.len(),
        elapsed.as_secs_f64(),
        SPLIT_ORACLE_BUDGET.as_secs()
    );
    if let Some(first) = mismatches.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(passed, detail)
}

// 2. Leaf-value optimality

fn criterion_leaf_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rows = rng.random_range(1..=300);
        let d = rng.random_range(1..=8);
        let lambda = rng.random_range(0.01..5.0);
        let grad =
            Array2::from_shape_simple_fn((rows, d), || 3.0 * rng.sample::<f64, _>(StandardNormal));
        let hess = Array2::from_shape_simple_fn((rows, d), || rng.random_range(1e-6..1.0));
        let gh = sketchtree::loss::GradHess {
            grad: grad.clone(),
            hess: hess.clone(),
        };
        let leaf: Vec<usize> = (0..rows).collect();
        let v = fit_leaf_values(std::slice::from_ref(&leaf), &gh, lambda);
        for j in 0..d {
            // d/dv [Σ_i (g_i v + ½ h_i v²) + ½ λ v²]
            let gs: f64 = grad.column(j).sum();
            let hs: f64 = hess.column(j).sum();
            let derivative = gs + (hs + lambda) * v[[0, j]];
            worst = worst.max(derivative.abs());
        }
    }
    outcome(
        worst <= LEAF_GRAD_TOL,
        format!(
            "100 random leaves, max |objective gradient| {worst:.2e} (tol {LEAF_GRAD_TOL:.0e})"
        ),
    )
}

// 3. Leaf-score error bounded by operator error

fn scaled_gradient(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let scales: Vec<f64> = (0..d)
        .map(|_| rng.random_range(0.1f64.ln()..10f64.ln()).exp())
        .collect();
    let mut g = Array2::zeros((n, d));
    for mut row in g.rows_mut() {
        for (v, s) in row.iter_mut().zip(&scales) {
            *v = s * rng.sample::<f64, _>(StandardNormal);
        }
    }
    g
}

fn criterion_score_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for trial in 0..200u64 {
        let n = rng.random_range(4..=64);
        let d = rng.random_range(1..=16);
        let k = rng.random_range(1..=d);
        let strategy = SketchStrategy::ALL_REDUCING[rng.random_range(0..4)];
        let g = scaled_gradient(n, d, &mut rng);
        let sketch = build_sketch(g.view(), strategy, k, trial).unwrap();
        let lambda = rng.random_range(0.1..2.0);
        let emp = empirical_sup_error(g.view(), sketch.gk.view(), 100, lambda, trial).unwrap();
        let op = operator_error(g.view(), sketch.gk.view()).unwrap().value;
        if emp > op + SCORE_BOUND_SLACK {
            violations += 1;
        }
        max_excess = max_excess.max(emp - op);
    }
    outcome(
        violations == 0,
        format!("200 trials, {violations} violations, max (empirical - operator) {max_excess:.2e} (slack {SCORE_BOUND_SLACK:.0e})"),
    )
}

// 4. Strategy bound suite

fn criterion_bound_suite() -> Outcome {
    let configs = [
        VerifyConfig::default(),
        VerifyConfig {
            n: 40,
            d: 12,
            k: 7,
            trials: 30,
            seed: 1,
            ..VerifyConfig::default()
        },
        VerifyConfig {
            n: 30,
            d: 10,
            k: 10,
            trials: 10,
            seed: 2,
            ..VerifyConfig::default()
        },
    ];
    let (mut trials, mut checks, mut violations) = (0, 0, Vec::new());
    let mut worst_svd: f64 = 0.0;
    for cfg in &configs {
        let out = verify_bounds(cfg).unwrap();
        trials += out.trials.len();
        checks += out.checks;
        violations.extend(
            out.violations
                .iter()
                .map(|v| format!("{}: {}", v.strategy, v.check)),
        );
        for t in &out.trials {
            let svd = t
                .reports
                .iter()
                .find(|r| r.strategy == SketchStrategy::TruncatedSvd)
                .unwrap();
            worst_svd = worst_svd
                .max((svd.operator_bound - t.sigma_sq_next).abs() / t.sigma_sq_next.max(1.0));
        }
    }
    let passed = violations.is_empty() && worst_svd <= SVD_EQ_TOL;
    let mut detail = format!(
        "{trials} trials, {checks} checks (top tail bound, svd equality, svd minimality, score bound), {} violations, max svd deviation {worst_svd:.1e}",
        violations.len()
    );
    if let Some(v) = violations.first() {
        detail.push_str(&format!("; first: {v}"));
    }
    outcome(passed, detail)
}

// 5. Unbiasedness of randomized sketches

fn criterion_unbiasedness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (n, d, k) = (40, 12, 4);
    let g = scaled_gradient(n, d, &mut rng);
    let v = Array1::from_shape_simple_fn(n, || f64::from(rng.random_bool(0.5)));
    let target = {
        let gv = g.t().dot(&v);
        gv.dot(&gv)
    };
    let mut lines = Vec::new();
    let mut passed = true;
    for strategy in [
        SketchStrategy::RandomSampling,
        SketchStrategy::RandomProjection,
    ] {
        let draws: Vec<f64> = (0..MC_DRAWS)
            .map(|seed| {
                let sk = match strategy {
                    SketchStrategy::RandomSampling => random_sampling(g.view(), k, seed),
                    _ => random_projection(g.view(), k, seed),
                }
                .unwrap();
                let gv = sk.gk.t().dot(&v);
                gv.dot(&gv)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / MC_DRAWS as f64;
        let var =
            draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (MC_DRAWS - 1) as f64;
        let se = (var / MC_DRAWS as f64).sqrt();
        let z = (mean - target).abs() / se;
        passed &= z <= MC_STANDARD_ERRORS;
        lines.push(format!("{strategy} {z:.2} SE"));
    }
    outcome(
        passed,
        format!(
            "{MC_DRAWS} draws, |mean - exact| = {} (limit {MC_STANDARD_ERRORS} SE)",
            lines.join(", ")
        ),
    )
}

// 6. Loss derivatives against finite differences

/// Per-row losses written independently of the library.
fn row_loss(task: TaskKind, y: &[f64], a: &[f64]) -> f64 {
    match task {
        TaskKind::MultitaskRegression => y.iter().zip(a).map(|(y, a)| 0.5 * (a - y).powi(2)).sum(),
        TaskKind::Multilabel => y
            .iter()
            .zip(a)
            .map(|(y, a)| {
                let p = 1.0 / (1.0 + (-a).exp());
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum(),
        TaskKind::Multiclass => {
            let z: f64 = a.iter().map(|v| v.exp()).sum();
            -y.iter()
                .zip(a)
                .map(|(y, a)| y * (a.exp() / z).ln())
                .sum::<f64>()
        }
    }
}

fn criterion_loss_derivatives() -> Outcome {
    const GRAD_STEP: f64 = 1e-5;
    const HESS_STEP: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut parts = Vec::new();
    let mut passed = true;
    for task in [
        TaskKind::MultitaskRegression,
        TaskKind::Multilabel,
        TaskKind::Multiclass,
    ] {
        let (mut worst_g, mut worst_h): (f64, f64) = (0.0, 0.0);
        for _ in 0..20 {
            let (n, d) = (rng.random_range(1..=10), rng.random_range(2..=6));
            let a = Array2::from_shape_simple_fn((n, d), || rng.random_range(-4.0..4.0));
            let y = match task {
                TaskKind::MultitaskRegression => {
                    Array2::from_shape_simple_fn((n, d), || rng.random_range(-3.0..3.0))
                }
                TaskKind::Multilabel => {
                    Array2::from_shape_simple_fn((n, d), || f64::from(rng.random_bool(0.5)))
                }
                TaskKind::Multiclass => {
                    let mut y = Array2::zeros((n, d));
                    for i in 0..n {
                        y[[i, rng.random_range(0..d)]] = 1.0;
                    }
                    y
                }
            };
            let gh = match task {
                TaskKind::MultitaskRegression => grad_hess_mse(y.view(), a.view()),
                TaskKind::Multilabel => grad_hess_sigmoid_bce(y.view(), a.view()),
                TaskKind::Multiclass => grad_hess_softmax(y.view(), a.view()),
            }
            .unwrap();
            for i in 0..n {
                let yr: Vec<f64> = y.row(i).to_vec();
                let ar: Vec<f64> = a.row(i).to_vec();
                for j in 0..d {
                    let at = |delta: f64| {
                        let mut shifted = ar.clone();
                        shifted[j] += delta;
                        row_loss(task, &yr, &shifted)
                    };
                    let fd_g = (at(GRAD_STEP) - at(-GRAD_STEP)) / (2.0 * GRAD_STEP);
                    let fd_h =
                        (at(HESS_STEP) - 2.0 * at(0.0) + at(-HESS_STEP)) / (HESS_STEP * HESS_STEP);
                    worst_g = worst_g.max((gh.grad[[i, j]] - fd_g).abs());
                    worst_h = worst_h.max((gh.hess[[i, j]] - fd_h).abs());
                }
            }
        }
        passed &= worst_g <= FD_GRAD_TOL && worst_h <= FD_HESS_TOL;
        parts.push(format!("{task} grad {worst_g:.1e} hess {worst_h:.1e}"));
    }
    outcome(
        passed,
        format!(
            "max |analytic - FD|: {} (tol {FD_GRAD_TOL:.0e} / {FD_HESS_TOL:.0e})",
            parts.join("; ")
        ),
    )
}

// 7. Top outputs with k = d equals no sketch

fn criterion_full_width_equivalence() -> Outcome {
    let mut checked = Vec::new();
    let mut passed = true;
    let cases: Vec<(Dataset, &str)> = vec![
        (
            generate_synthetic(600, 8, 4, 6, 71).unwrap(),
            "multiclass d=6",
        ),
        (regression_data(400, 5, 3, 72), "regression d=3"),
    ];
    for (ds, name) in &cases {
        let base = BoostParams {
            n_trees: 30,
            learning_rate: 0.2,
            tree: TreeParams {
                max_depth: 4,
                ..TreeParams::default()
            },
            seed: 9,
            ..BoostParams::default()
        };
        let none = train(ds, None, &base).unwrap();
        let top = train(
            ds,
            None,
            &BoostParams {
                sketch: SketchStrategy::TopOutputs,
                k: ds.n_outputs(),
                ..base.clone()
            },
        )
        .unwrap();
        let same = to_json_string(&none).unwrap() == to_json_string(&top).unwrap();
        passed &= same;
        checked.push(format!(
            "{name}: {}",
            if same { "identical" } else { "DIFFERENT" }
        ));
    }
    outcome(passed, format!("model bytes, {}", checked.join(", ")))
}

fn regression_data(n: usize, m: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Array2<f64> = Array2::from_shape_simple_fn((n, m), || rng.random_range(-1.0..1.0));
    let mut y = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            y[[i, j]] = (x[[i, j % m]] * 3.0).sin()
                + 0.5 * x[[i, (j + 1) % m]]
                + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Dataset::new(x, y, TaskKind::MultitaskRegression).unwrap()
}

// 8. Scaled timing

fn criterion_timing() -> Outcome {
    let started = Instant::now();
    let base = BenchConfig {
        classes: vec![5, 25, 100],
        rows: 50_000,
        features: 20,
        informative: 10,
        depth: 6,
        trees: 100,
        strategies: vec![SketchStrategy::None],
        k: 5,
        ..BenchConfig::default()
    };
    let report = |r: &BenchRow| {
        eprintln!(
            "    bench: {} classes {} k={} {:.2} s/100 trees",
            r.classes, r.strategy, r.k, r.seconds
        )
    };
    let none = run_bench(&base, report).unwrap();
    let projection = run_bench(
        &BenchConfig {
            classes: vec![100],
            strategies: vec![SketchStrategy::RandomProjection],
            ..base.clone()
        },
        report,
    )
    .unwrap();
    let elapsed = started.elapsed();
    let secs: Vec<f64> = none.iter().map(|r| r.seconds).collect();
    let grows = secs.windows(2).all(|w| w[1] > w[0]);
    let speedup = secs[2] / projection[0].seconds;
    let passed = grows && speedup >= MIN_SPEEDUP && elapsed <= TIMING_BUDGET;
    outcome(
        passed,
        format!(
            "none s/100 trees at 5/25/100 classes = {:.2}/{:.2}/{:.2} (increasing: {grows}); projection k=5 at 100 classes {:.2}, speedup {speedup:.2}x (floor {MIN_SPEEDUP}x); {:.0}s (budget {}s)",
            secs[0],
            secs[1],
            secs[2],
            projection[0].seconds,
            elapsed.as_secs_f64(),
            TIMING_BUDGET.as_secs()
        ),
    )
}

// 9. Scaled quality

fn criterion_quality() -> Outcome {
    let started = Instant::now();
    let ds = generate_synthetic(20_000, 20, 10, 25, 2024).unwrap();
    let (tr, va) = split_train_valid(&ds, 0.2, 2024).unwrap();
    let base = BoostParams {
        n_trees: 300,
        learning_rate: 0.05,
        tree: TreeParams {
            max_depth: 6,
            ..TreeParams::default()
        },
        k: 5,
        seed: 2024,
        ..BoostParams::default()
    };
    let ce = |strategy| {
        let model = train(
            &tr,
            Some(&va),
            &BoostParams {
                sketch: strategy,
                ..base.clone()
            },
        )
        .unwrap();
        evaluate(&model, &va).unwrap().primary.value
    };
    let none = ce(SketchStrategy::None);
    let mut passed = true;
    let mut parts = vec![format!("none {none:.4}")];
    for strategy in [
        SketchStrategy::RandomProjection,
        SketchStrategy::RandomSampling,
    ] {
        let value = ce(strategy);
        let rel = (value - none).abs() / none;
        passed &= rel <= QUALITY_REL_TOL;
        parts.push(format!(
            "{strategy} {value:.4} ({:+.1}%)",
            100.0 * (value - none) / none
        ));
    }
    let elapsed = started.elapsed();
    passed &= elapsed <= QUALITY_BUDGET;
    outcome(
        passed,
        format!(
            "valid cross-entropy {} (tol {:.0}% relative); {:.0}s (budget {}s)",
            parts.join(", "),
            QUALITY_REL_TOL * 100.0,
            elapsed.as_secs_f64(),
            QUALITY_BUDGET.as_secs()
        ),
    )
}

// 10. Determinism and round trip

fn run_cli(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sketchtree"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run cli")
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    write_csv(
        &generate_synthetic(1500, 10, 5, 5, 10).unwrap(),
        cwd.join("d.csv"),
    )
    .unwrap();
    let train_args = |out: &'static str, threads: &'static str| {
        vec![
            "train",
            "--data",
            "d.csv",
            "--task",
            "multiclass",
            "--label",
            "label",
            "--sketch",
            "projection",
            "--k",
            "3",
            "--trees",
            "40",
            "--depth",
            "5",
            "--seed",
            "1",
            "--valid-fraction",
            "0.2",
            "--out",
            out,
            "--threads",
            threads,
        ]
    };
    let mut ok = true;
    for (out, threads) in [("a.json", "1"), ("b.json", "1"), ("c.json", "4")] {
        ok &= run_cli(&train_args(out, threads), cwd).status.success();
    }
    let read = |name: &str| std::fs::read(cwd.join(name)).unwrap_or_default();
    let repeat_identical = ok && read("a.json") == read("b.json");
    let threads_identical = ok && read("a.json") == read("c.json");
    for (out, threads) in [("p1.csv", "1"), ("p4.csv", "4")] {
        ok &= run_cli(
            &[
                "predict",
                "--model",
                "a.json",
                "--data",
                "d.csv",
                "--drop",
                "label",
                "--out",
                out,
                "--threads",
                threads,
            ],
            cwd,
        )
        .status
        .success();
    }
    let predictions_identical =
        ok && read("p1.csv") == read("p4.csv") && !read("p1.csv").is_empty();

    // Library round trip on 20 small models.
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut max_diff: f64 = 0.0;
    let mut bit_exact = true;
    for i in 0..20u64 {
        let classes = rng.random_range(2..=5);
        let ds = generate_synthetic(
            rng.random_range(30..=120),
            rng.random_range(2..=6),
            2,
            classes,
            i,
        )
        .unwrap();
        let params = BoostParams {
            n_trees: rng.random_range(1..=15),
            learning_rate: rng.random_range(0.05..0.5),
            tree: TreeParams {
                max_depth: rng.random_range(1..=4),
                ..TreeParams::default()
            },
            sketch: SketchStrategy::ALL_REDUCING[(i % 3) as usize],
            k: 2,
            seed: i,
            ..BoostParams::default()
        };
        let model = train(&ds, None, &params).unwrap();
        let loaded = from_json_str(&to_json_string(&model).unwrap()).unwrap();
        let x = Array2::from_shape_simple_fn((50, ds.n_features()), || {
            if rng.random_bool(0.05) {
                f64::NAN
            } else {
                2.0 * rng.sample::<f64, _>(StandardNormal)
            }
        });
        let before = predict_raw(&model, x.view()).unwrap();
        let after = predict_raw(&loaded, x.view()).unwrap();
        for (a, b) in before.iter().zip(after.iter()) {
            bit_exact &= a.to_bits() == b.to_bits();
            max_diff = max_diff.max((a - b).abs());
        }
    }
    outcome(
        repeat_identical && threads_identical && predictions_identical && bit_exact,
        format!(
            "repeat train identical: {repeat_identical}; --threads 1 vs 4 model identical: {threads_identical}, predictions identical: {predictions_identical}; 20 save/load round trips max |diff| {max_diff:e}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exhaustive split oracle", criterion_split_oracle),
        ("leaf-value optimality", criterion_leaf_optimality),
        ("leaf-score error <= operator error", criterion_score_bound),
        ("sketch bound suite", criterion_bound_suite),
        ("unbiased randomized sketches", criterion_unbiasedness),
        (
            "loss derivatives vs finite differences",
            criterion_loss_derivatives,
        ),
        (
            "top outputs k=d equals no sketch",
            criterion_full_width_equivalence,
        ),
        ("training time scaling", criterion_timing),
        ("sketched quality vs full", criterion_quality),
        ("determinism and round trip", criterion_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.passed {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} [{name}] {} ({:.1}s)",
            if result.passed { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
