//! Iteratively reweighted MxNE for the non-convex problem
//!
//! ```text
//! min_X ½‖M − GX‖_F² + λ Σ_s sqrt(‖X_s‖_F)
//! ```
//!
//! Iteration 1 is a plain MxNE solve. Every later iteration solves the MxNE
//! problem on the weighted design `G·W`, `W = diag(w ⊗ 1_O)`, with weights
//! `w_s = 2·sqrt(‖X_s‖_F + ε)` taken from the previous iterate. In the
//! original coordinates this penalizes `‖X_s‖_F` by `λ / w_s`, which is the
//! tangent majorizer of `λ sqrt(‖X_s‖_F + ε)`, so the objective decreases
//! monotonically. Blocks that hit zero get the floor weight `2·sqrt(ε)` and
//! are effectively frozen out.

use alloc::vec::Vec;

use crate::error::{ensure, Result};
use crate::linalg::sqrt;
use crate::mxne::{solve_prepared, BlockOperator, SolveReport, SolverConfig};
use crate::problem::{objective_irmxne, BlockDesign, Measurements, SourceEstimate};

/// Relative objective change under which reweighting stops early, provided
/// the support did not change either.
const EARLY_STOP_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ReweightConfig {
    /// Number of reweighted iterations, the first being plain MxNE.
    pub k: usize,
    /// Weight floor ε.
    pub eps_reweight: f64,
    pub inner: SolverConfig,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self { k: 5, eps_reweight: 1e-8, inner: SolverConfig::default() }
    }
}

impl ReweightConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.k >= 1, InvalidInput, "number of reweightings K must be >= 1");
        ensure!(
            self.eps_reweight > 0.0 && self.eps_reweight.is_finite(),
            InvalidInput,
            "eps_reweight must be > 0"
        );
        self.inner.validate()
    }
}

/// Diagnostics of one reweighting iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReweightStep {
    /// Non-convex objective of the iterate.
    pub objective: f64,
    pub support_size: usize,
    pub sweeps: usize,
    pub gap: f64,
    pub converged: bool,
}

/// `w_s = 2·sqrt(‖X_s‖_F + ε)`.
pub fn reweight(block_norms: &[f64], eps_reweight: f64) -> Vec<f64> {
    block_norms.iter().map(|&n| 2.0 * sqrt(n + eps_reweight)).collect()
}

/// Solves the reweighted problem at `lambda`. `init` warm-starts the first
/// (unweighted) iteration.
pub fn irmxne_solve(
    design: &BlockDesign,
    meas: &Measurements,
    lambda: f64,
    config: &ReweightConfig,
    init: Option<&SourceEstimate>,
) -> Result<SolveReport> {
    config.validate()?;
    ensure!(
        design.n_sensors() == meas.m().rows(),
        Dimension,
        "design has {} sensors but measurements have {} rows",
        design.n_sensors(),
        meas.m().rows()
    );
    if let Some(init) = init {
        ensure!(
            init.x().shape() == (design.n_columns(), meas.n_times()),
            Dimension,
            "init estimate has the wrong shape"
        );
    }
    let op = BlockOperator::new(design);
    let first = solve_prepared(&op, meas, lambda, None, init.map(|e| e.x()), &config.inner)?;
    reweight_from(design, &op, meas, lambda, config, first)
}

/// Runs iterations `2..=K` starting from the result of iteration 1.
///
/// Each weighted problem is warm-started from the previous iterate. Stops
/// early when both the support and the objective are unchanged.
pub fn reweight_from(
    design: &BlockDesign,
    op: &BlockOperator,
    meas: &Measurements,
    lambda: f64,
    config: &ReweightConfig,
    first: SolveReport,
) -> Result<SolveReport> {
    config.validate()?;
    let mut current = first;
    let mut sweeps = current.sweeps;
    let mut converged = current.converged;
    let mut history = Vec::with_capacity(config.k);
    let mut objective = objective_irmxne(design, meas, current.estimate.x(), lambda)?;
    history.push(step(&current, objective));

    for _ in 1..config.k {
        let weights = reweight(current.estimate.block_norms(), config.eps_reweight);
        let factors: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
        let next = solve_prepared(op, meas, lambda, Some(&factors), Some(current.estimate.x()), &config.inner)?;
        let next_objective = objective_irmxne(design, meas, next.estimate.x(), lambda)?;
        sweeps += next.sweeps;
        converged &= next.converged;
        history.push(step(&next, next_objective));

        let same_support = next.estimate.active_set() == current.estimate.active_set();
        let stalled = (objective - next_objective).abs() <= EARLY_STOP_RTOL * objective.abs();
        current = next;
        objective = next_objective;
        if same_support && stalled {
            break;
        }
    }
    current.sweeps = sweeps;
    current.converged = converged;
    current.history = history;
    Ok(current)
}

fn step(report: &SolveReport, objective: f64) -> ReweightStep {
    ReweightStep {
        objective,
        support_size: report.estimate.active_set().len(),
        sweeps: report.sweeps,
        gap: report.gap,
        converged: report.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::mxne::mxne_solve;
    use crate::problem::{block_norms, lambda_max, objective_mxne};
    use crate::simulation::random_problem;

    #[test]
    fn weights_follow_sqrt() {
        assert_eq!(reweight(&[0.0, 0.0], 1e-8), alloc::vec![2.0 * libm::sqrt(1e-8); 2]);
        assert_eq!(reweight(&[4.0], 0.0), alloc::vec![4.0]);
        let w = reweight(&[3.0, 6.0], 0.0);
        assert!((w[1] / w[0] - libm::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn single_iteration_is_plain_mxne() {
        let (design, meas, _) = random_problem(4, 20, 30, 3, 5, 3, 1.0).unwrap();
        let lam = 0.2 * lambda_max(&design, &meas).unwrap();
        let cfg = ReweightConfig { k: 1, ..ReweightConfig::default() };
        let a = irmxne_solve(&design, &meas, lam, &cfg, None).unwrap();
        let b = mxne_solve(&design, &meas, lam, None, &cfg.inner).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.history.len(), 1);
    }

    #[test]
    fn zero_above_lambda_max() {
        let (design, meas, _) = random_problem(9, 20, 30, 3, 5, 3, 1.0).unwrap();
        let lam = 1.01 * lambda_max(&design, &meas).unwrap();
        let rep = irmxne_solve(&design, &meas, lam, &ReweightConfig::default(), None).unwrap();
        assert!(rep.estimate.is_zero());
    }

    #[test]
    fn rejects_zero_iterations() {
        let (design, meas, _) = random_problem(9, 10, 5, 3, 2, 1, 1.0).unwrap();
        let cfg = ReweightConfig { k: 0, ..ReweightConfig::default() };
        assert!(irmxne_solve(&design, &meas, 1.0, &cfg, None).is_err());
    }

    #[test]
    fn descent_and_shrinking_support() {
        for seed in 0..10 {
            let (design, meas, _) = random_problem(seed, 20, 30, 3, 5, 3, 1.0).unwrap();
            let lam = 0.15 * lambda_max(&design, &meas).unwrap();
            let cfg = ReweightConfig::default();
            let rep = irmxne_solve(&design, &meas, lam, &cfg, None).unwrap();
            let slack = 100.0 * rep.tol;
            for pair in rep.history.windows(2) {
                assert!(pair[1].objective <= pair[0].objective + slack, "seed {seed}");
            }
            let first = mxne_solve(&design, &meas, lam, None, &cfg.inner).unwrap();
            for s in rep.estimate.active_set() {
                assert!(first.estimate.active_set().contains(s), "seed {seed}: support grew");
            }
        }
    }

    #[test]
    fn weighted_substitution_identity() {
        // ½‖M − G(WX̃)‖² + λΣ‖X̃_s‖ = ½‖M − GX‖² + λΣ‖X_s‖/w_s with X = WX̃
        let (design, meas, _) = random_problem(2, 12, 6, 3, 4, 2, 1.0).unwrap();
        let w: Vec<f64> = (0..6).map(|s| 0.3 + 0.5 * s as f64).collect();
        let xt = Mat::from_fn(18, 4, |i, j| ((i * 13 + j * 7) % 11) as f64 / 5.0 - 1.0);
        let x = Mat::from_fn(18, 4, |i, j| w[i / 3] * xt[(i, j)]);
        let gw = Mat::from_fn(12, 18, |i, j| design.g()[(i, j)] * w[j / 3]);
        let wdesign = BlockDesign::without_positions(gw, 3).unwrap();
        let lhs = objective_mxne(&wdesign, &meas, &xt, 0.7).unwrap();
        let fit = 0.5 * crate::problem::residual(&design, &meas, &x).unwrap().frobenius_sq();
        let pen: f64 = block_norms(&x, 3).unwrap().iter().zip(&w).map(|(n, w)| n / w).sum();
        assert!((lhs - (fit + 0.7 * pen)).abs() < 1e-10 * lhs);
    }
}
