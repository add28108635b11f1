//! Randomized checks of the deterministic sketch error bounds.
//!
//! Each trial draws a gradient-like matrix, sketches it with every reducing
//! strategy and checks:
//! - leaf-score error never exceeds the operator-norm error,
//! - top outputs: operator error is at most the dropped columns' squared norms,
//! - truncated SVD: operator error equals `σ²_{k+1}` and is the smallest of all
//!   strategies,
//! - at `k = d`, top outputs and truncated SVD are exact.
//!
//! Probabilistic bounds are reported but never checked.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::booster::iteration_seed;
use crate::error::{Error, Result};
use crate::sketch::{bound_report, build_sketch, singular_values, BoundReport, SketchStrategy};

/// Slack for comparing two floating-point estimates of the same quantity.
pub const ABS_SLACK: f64 = 1e-9;
/// Relative tolerance for the truncated-SVD equality.
pub const SVD_EQUALITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    /// Random leaves per sketch for the empirical score error.
    pub leaves: usize,
    pub lambda: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n: 64,
            d: 32,
            k: 4,
            trials: 50,
            seed: 0,
            leaves: 200,
            lambda: 1.0,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if self.n == 0 || self.d == 0 || self.leaves == 0 {
            return Err(Error::InvalidArgument(
                "n, d and leaves must be >= 1".into(),
            ));
        }
        if self.k == 0 || self.k > self.d {
            return Err(Error::InvalidArgument(format!(
                "k must lie in [1, d = {}], got {}",
                self.d, self.k
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Gaussian entries with per-column scales drawn log-uniformly from
/// `[0.1, 10]`, so column norms differ by orders of magnitude.
pub fn random_gradient(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub strategy: SketchStrategy,
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    /// `σ²_{k+1}`, zero when `k = d`.
    pub sigma_sq_next: f64,
    pub reports: Vec<BoundReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub config: VerifyConfig,
    pub trials: Vec<TrialReport>,
    pub violations: Vec<Violation>,
    pub checks: usize,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + ABS_SLACK * rhs.abs().max(1.0)
}

/// Runs every trial; see the module docs for the checks.
pub fn verify_bounds(config: &VerifyConfig) -> Result<VerifyOutcome> {
    config.validate()?;
    let mut trials = Vec::with_capacity(config.trials);
    let mut violations = Vec::new();
    let mut checks = 0;
    for trial in 0..config.trials {
        let seed = iteration_seed(config.seed, trial);
        let g = random_gradient(config.n, config.d, seed);
        let sv = singular_values(g.view())?;
        let sigma_sq_next = sv.get(config.k).map_or(0.0, |s| s * s);
        let mut reports = Vec::with_capacity(SketchStrategy::ALL_REDUCING.len());
        let mut check = |strategy, name: &str, ok: bool, lhs: f64, rhs: f64| {
            checks += 1;
            if !ok {
                violations.push(Violation {
                    trial,
                    strategy,
                    check: name.into(),
                    lhs,
                    rhs,
                });
            }
        };
        for (s, &strategy) in SketchStrategy::ALL_REDUCING.iter().enumerate() {
            let sketch_seed = iteration_seed(seed, s);
            let sketch = build_sketch(g.view(), strategy, config.k, sketch_seed)?;
            let report =
                bound_report(g.view(), &sketch, config.lambda, config.leaves, sketch_seed)?;
            let (emp, op) = (report.empirical_sup_error, report.operator_bound);
            check(
                strategy,
                "leaf score error <= operator error",
                emp <= op + ABS_SLACK,
                emp,
                op,
            );
            match strategy {
                SketchStrategy::TopOutputs => {
                    let tail = report.strategy_bound;
                    check(
                        strategy,
                        "operator error <= dropped column norms",
                        within(op, tail),
                        op,
                        tail,
                    );
                }
                SketchStrategy::TruncatedSvd => {
                    let ok =
                        (op - sigma_sq_next).abs() <= SVD_EQUALITY_TOL * sigma_sq_next.max(1.0);
                    check(
                        strategy,
                        "operator error == sigma_(k+1)^2",
                        ok,
                        op,
                        sigma_sq_next,
                    );
                }
                _ => {}
            }
            if config.k == config.d
                && matches!(
                    strategy,
                    SketchStrategy::TopOutputs | SketchStrategy::TruncatedSvd
                )
            {
                let scale = sv.first().map_or(0.0, |s| s * s);
                check(
                    strategy,
                    "exact at k = d",
                    op <= ABS_SLACK * scale.max(1.0),
                    op,
                    0.0,
                );
            }
            reports.push(report);
        }
        let svd_op = reports
            .iter()
            .find(|r| r.strategy == SketchStrategy::TruncatedSvd)
            .map(|r| r.operator_bound)
            .expect("svd is a reducing strategy");
        for r in reports
            .iter()
            .filter(|r| r.strategy != SketchStrategy::TruncatedSvd)
        {
            check(
                r.strategy,
                "truncated svd error <= this strategy's error",
                within(svd_op, r.operator_bound),
                svd_op,
                r.operator_bound,
            );
        }
        trials.push(TrialReport {
            trial,
            seed,
            sigma_sq_next,
            reports,
        });
    }
    Ok(VerifyOutcome {
        config: config.clone(),
        trials,
        violations,
        checks,
    })
}
