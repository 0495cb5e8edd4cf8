//! λ-MAP: fixed-point iteration for λ under a Gamma hyperprior.
//!
//! With `λ_max = max_s ‖G_sᵀM‖_F`, `α = (λ_max/2)·β + 1`, each iteration
//! solves the reweighted problem at the current λ and updates
//!
//! ```text
//! λ ← (2ST + α − 1) / (Σ_s sqrt(‖X_s‖_F) + β)
//! ```
//!
//! until two consecutive values differ by less than `tol_lambda`. The scheme
//! depends heavily on β and may settle above `λ_max` (empty model); that case
//! is flagged, not clamped.

use alloc::vec::Vec;

use crate::error::{ensure, Result};
use crate::irmxne::{irmxne_solve, ReweightConfig};
use crate::linalg::sqrt;
use crate::problem::{lambda_max, BlockDesign, Measurements, SourceEstimate};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LmapConfig {
    /// Initial λ; `None` means `λ_max / 2`.
    pub lambda0: Option<f64>,
    /// Hyperprior parameter β.
    pub beta: f64,
    pub n_iter: usize,
    /// Threshold on `|λ_i − λ_{i−1}|`; `None` means `1e-4 · λ_max`.
    pub tol_lambda: Option<f64>,
    pub reweight: ReweightConfig,
}

impl Default for LmapConfig {
    fn default() -> Self {
        Self { lambda0: None, beta: 10.0, n_iter: 10, tol_lambda: None, reweight: ReweightConfig::default() }
    }
}

impl LmapConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.beta > 0.0 && self.beta.is_finite(), InvalidInput, "beta must be > 0");
        ensure!(self.n_iter >= 1, InvalidInput, "n_iter must be >= 1");
        if let Some(l0) = self.lambda0 {
            ensure!(l0 > 0.0 && l0.is_finite(), InvalidInput, "lambda0 must be > 0");
        }
        if let Some(tol) = self.tol_lambda {
            ensure!(tol > 0.0 && tol.is_finite(), InvalidInput, "tol_lambda must be > 0");
        }
        self.reweight.validate()
    }
}

/// `(2ST + α − 1) / (Σ_s sqrt(‖X_s‖_F) + β)`
pub fn lmap_update(n_sources: usize, n_times: usize, alpha: f64, beta: f64, block_norms: &[f64]) -> f64 {
    let numerator = 2.0 * (n_sources * n_times) as f64 + alpha - 1.0;
    let penalty: f64 = block_norms.iter().map(|&n| sqrt(n)).sum();
    numerator / (penalty + beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmapResult {
    pub lambda: f64,
    pub lambda_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tol_lambda: f64,
    /// `λ^{(0)}, λ^{(1)}, …`
    pub trace: Vec<f64>,
    /// Solution at the second-to-last iterate, from which `lambda` was computed.
    pub estimate: SourceEstimate,
    pub converged: bool,
    /// Iterations `i ≥ 1` whose `λ^{(i)}` reached `λ_max`.
    pub over_lambda_max: Vec<usize>,
}

pub fn select_lambda_map(design: &BlockDesign, meas: &Measurements, config: &LmapConfig) -> Result<LmapResult> {
    config.validate()?;
    let lmax = lambda_max(design, meas)?;
    ensure!(lmax > 0.0, InvalidInput, "lambda_max is 0: the data carry no signal");
    let alpha = (lmax / 2.0) * config.beta + 1.0;
    let tol_lambda = config.tol_lambda.unwrap_or(1e-4 * lmax);
    let (s_count, t) = (design.n_sources(), meas.n_times());

    let mut lambda = config.lambda0.unwrap_or(lmax / 2.0);
    let mut trace = alloc::vec![lambda];
    let mut over_lambda_max = Vec::new();
    let mut warm: Option<SourceEstimate> = None;
    let mut converged = false;
    for i in 1..=config.n_iter {
        let rep = irmxne_solve(design, meas, lambda, &config.reweight, warm.as_ref())?;
        let next = lmap_update(s_count, t, alpha, config.beta, rep.estimate.block_norms());
        trace.push(next);
        if next >= lmax {
            log::warn!("lambda-map: iterate {i} gives lambda {next:.4e} >= lambda_max {lmax:.4e}");
            over_lambda_max.push(i);
        }
        let step = (next - lambda).abs();
        lambda = next;
        warm = Some(rep.estimate);
        if step < tol_lambda {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("lambda-map: no fixed point within {} iterations", config.n_iter);
    }
    Ok(LmapResult {
        lambda,
        lambda_max: lmax,
        alpha,
        beta: config.beta,
        tol_lambda,
        trace,
        estimate: warm.expect("n_iter >= 1"),
        converged,
        over_lambda_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::random_problem;

    #[test]
    fn update_examples() {
        assert_eq!(lmap_update(3, 4, 5.0, 2.0, &[0.0; 3]), (24.0 + 4.0) / 2.0);
        // S=2, T=3, α=11, β=10, Σ sqrt = 2 → 22/12
        assert_eq!(lmap_update(2, 3, 11.0, 10.0, &[1.0, 1.0]), 11.0 / 6.0);
        assert!(lmap_update(2, 3, 11.0, 10.0, &[4.0, 1.0]) < lmap_update(2, 3, 11.0, 10.0, &[1.0, 1.0]));
    }

    #[test]
    fn empty_model_is_absorbing() {
        let (design, meas, _) = random_problem(3, 20, 30, 3, 5, 3, 1.0).unwrap();
        let lmax = lambda_max(&design, &meas).unwrap();
        // tiny β: the empty-model update (2ST + α − 1)/β is far above λ_max
        let cfg = LmapConfig { beta: 1e-3, lambda0: Some(2.0 * lmax), ..LmapConfig::default() };
        let res = select_lambda_map(&design, &meas, &cfg).unwrap();
        assert!(res.estimate.is_zero());
        assert!(res.converged);
        assert_eq!(res.over_lambda_max, alloc::vec![1, 2]);
        assert_eq!(res.alpha, (lmax / 2.0) * 1e-3 + 1.0);
        let fixed = (2.0 * 150.0 + res.alpha - 1.0) / 1e-3;
        assert_eq!(res.lambda, fixed);
    }

    #[test]
    fn deterministic_trace() {
        let (design, meas, _) = random_problem(8, 20, 30, 3, 5, 3, 1.0).unwrap();
        let cfg = LmapConfig { beta: 50.0, ..LmapConfig::default() };
        let a = select_lambda_map(&design, &meas, &cfg).unwrap();
        let b = select_lambda_map(&design, &meas, &cfg).unwrap();
        assert_eq!(a, b);
        if a.converged {
            let again = lmap_update(30, 5, a.alpha, a.beta, a.estimate.block_norms());
            assert_eq!(again, a.lambda);
            let prev = a.trace[a.trace.len() - 2];
            assert!((a.lambda - prev).abs() < a.tol_lambda);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let (design, meas, _) = random_problem(8, 10, 5, 3, 2, 1, 1.0).unwrap();
        let bad = LmapConfig { beta: 0.0, ..LmapConfig::default() };
        assert!(select_lambda_map(&design, &meas, &bad).is_err());
        let bad = LmapConfig { n_iter: 0, ..LmapConfig::default() };
        assert!(select_lambda_map(&design, &meas, &bad).is_err());
    }
}
