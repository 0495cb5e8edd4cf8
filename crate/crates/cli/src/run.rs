//! Loading a problem and running one selection method on it.

use serde::Serialize;
use sis_core::cv::{make_folds, select_lambda_cv};
use sis_core::irmxne::irmxne_solve;
use sis_core::lambda_grid::{make_grid, LambdaGrid};
use sis_core::lmap::{select_lambda_map, LmapConfig};
use sis_core::metrics::{delta_stats, RecoveryStats};
use sis_core::problem::{explained_variance, lambda_max};
use sis_core::simulation::{simulate, SimulationTruth};
use sis_core::sure::{select_lambda_sure, SureConfig};
use sis_core::{BlockDesign, Measurements, SourceEstimate};

use crate::config::{ExperimentConfig, FileScenario, Method, Scenario};
use crate::error::{CliError, Result};
use crate::nmat::{load_matrix, read_positions};

/// A problem instance, with the ground truth when it was simulated.
#[derive(Debug, Clone)]
pub struct Problem {
    pub design: BlockDesign,
    pub meas: Measurements,
    pub truth: Option<SimulationTruth>,
}

fn load_files(f: &FileScenario) -> Result<Problem> {
    let g = load_matrix(&f.design).map_err(CliError::format(&f.design))?;
    let m = load_matrix(&f.measurements).map_err(CliError::format(&f.measurements))?;
    let design = match &f.positions {
        Some(p) => BlockDesign::new(g, f.n_orient, read_positions(p).map_err(CliError::format(p))?)?,
        None => BlockDesign::without_positions(g, f.n_orient)?,
    };
    if design.n_sensors() != m.rows() {
        return Err(CliError::Config(format!(
            "scenario.files: design has {} rows but measurements have {}",
            design.n_sensors(),
            m.rows()
        )));
    }
    Ok(Problem { design, meas: Measurements::new(m, f.sigma)?, truth: None })
}

pub fn load_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    match &cfg.scenario {
        Scenario::Simulated(spec) => {
            let (design, meas, truth) = simulate(spec)?;
            Ok(Problem { design, meas, truth: Some(truth) })
        }
        Scenario::Files(f) => load_files(f),
    }
}

/// One point of a SURE curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurePoint {
    pub index: usize,
    pub lambda: f64,
    pub sure: f64,
    pub dof: f64,
    pub residual_energy: f64,
    pub n_sources: usize,
    pub valid: bool,
}

/// Method-specific diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Diagnostics {
    Sure {
        grid: Vec<f64>,
        curve: Vec<SurePoint>,
        /// `(grid index, message)` for points whose solves failed.
        failures: Vec<(usize, String)>,
        eps_fd: f64,
        probe_fingerprints: Vec<String>,
    },
    Cv {
        grid: Vec<f64>,
        mean_errors: Vec<Option<f64>>,
        fold_errors: Vec<Vec<Option<f64>>>,
        fold_sizes: Vec<usize>,
        skipped_folds: Vec<usize>,
    },
    Lmap {
        alpha: f64,
        beta: f64,
        tol_lambda: f64,
        trace: Vec<f64>,
        over_lambda_max: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub lambda: f64,
    pub lambda_max: f64,
    pub estimate: SourceEstimate,
    /// Whether the final solve (and, for λ-MAP, the fixed point) converged.
    pub converged: bool,
    pub diagnostics: Diagnostics,
    /// Estimates along the grid, kept only when requested.
    pub path: Option<Vec<(usize, SourceEstimate)>>,
}

impl MethodOutcome {
    pub fn lambda_ratio(&self) -> f64 {
        self.lambda / self.lambda_max
    }
}

pub fn grid_for(cfg: &ExperimentConfig, lmax: f64) -> Result<LambdaGrid> {
    Ok(make_grid(lmax, cfg.grid.n, cfg.grid.ratio_min)?)
}

/// Runs `method` on the problem. With `keep_path`, SURE also returns its
/// per-λ estimates (used for risk diagnostics in sweeps).
pub fn run_method(
    problem: &Problem,
    method: Method,
    cfg: &ExperimentConfig,
    keep_path: bool,
) -> Result<MethodOutcome> {
    let (design, meas) = (&problem.design, &problem.meas);
    let lmax = lambda_max(design, meas)?;
    if lmax == 0.0 {
        return Err(CliError::Solver(sis_core::Error::InvalidInput(
            "lambda_max is 0: the measurements are orthogonal to the design".into(),
        )));
    }
    match method {
        Method::Sure => {
            let grid = grid_for(cfg, lmax)?;
            let sure_cfg = SureConfig { reweight: cfg.reweight, n_probes: cfg.sure.n_probes };
            let sel = select_lambda_sure(design, meas, &grid, &sure_cfg, cfg.sure.seed)?;
            let chosen = sel.selected();
            let (lambda, estimate, converged) = (chosen.lambda, chosen.estimate.clone(), chosen.valid);
            let curve = sel
                .curve
                .iter()
                .map(|e| SurePoint {
                    index: e.index,
                    lambda: e.lambda,
                    sure: e.sure,
                    dof: e.dof,
                    residual_energy: e.residual_energy,
                    n_sources: e.estimate.active_set().len(),
                    valid: e.valid,
                })
                .collect();
            let path = keep_path.then(|| sel.curve.iter().map(|e| (e.index, e.estimate.clone())).collect());
            let diagnostics = Diagnostics::Sure {
                grid: grid.values().to_vec(),
                curve,
                failures: sel.failures.iter().map(|(i, e)| (*i, e.to_string())).collect(),
                eps_fd: sel.eps_fd,
                probe_fingerprints: sel.probe_fingerprints.iter().map(|f| format!("{f:016x}")).collect(),
            };
            Ok(MethodOutcome { method, lambda, lambda_max: lmax, estimate, converged, diagnostics, path })
        }
        Method::Cv => {
            let grid = grid_for(cfg, lmax)?;
            let plan = make_folds(design.n_sensors(), cfg.cv.folds, cfg.cv.seed)?;
            let sel = select_lambda_cv(design, meas, &grid, &plan, &cfg.reweight)?;
            let refit = irmxne_solve(design, meas, sel.lambda, &cfg.reweight, None)?;
            let diagnostics = Diagnostics::Cv {
                grid: grid.values().to_vec(),
                mean_errors: sel.mean_errors,
                fold_errors: sel.fold_errors,
                fold_sizes: plan.fold_sizes(),
                skipped_folds: sel.skipped_folds,
            };
            Ok(MethodOutcome {
                method,
                lambda: sel.lambda,
                lambda_max: lmax,
                estimate: refit.estimate,
                converged: refit.converged,
                diagnostics,
                path: None,
            })
        }
        Method::Lmap => {
            let lm = LmapConfig {
                lambda0: cfg.lmap.lambda0_ratio.map(|r| r * lmax),
                beta: cfg.lmap_beta()?,
                n_iter: cfg.lmap.n_iter,
                tol_lambda: cfg.lmap.tol_ratio.map(|r| r * lmax),
                reweight: cfg.reweight,
            };
            let res = select_lambda_map(design, meas, &lm)?;
            let diagnostics = Diagnostics::Lmap {
                alpha: res.alpha,
                beta: res.beta,
                tol_lambda: res.tol_lambda,
                trace: res.trace,
                over_lambda_max: res.over_lambda_max,
            };
            Ok(MethodOutcome {
                method,
                lambda: res.lambda,
                lambda_max: lmax,
                estimate: res.estimate,
                converged: res.converged,
                diagnostics,
                path: None,
            })
        }
    }
}

/// Explained variance of the estimate; `None` when `M = 0`.
pub fn explained(problem: &Problem, estimate: &SourceEstimate) -> Option<f64> {
    explained_variance(&problem.design, &problem.meas, estimate.x()).ok()
}

/// δ-statistics of the estimate against the simulated truth.
pub fn recovery(problem: &Problem, estimate: &SourceEstimate, delta_mm: f64) -> Result<Option<RecoveryStats>> {
    let Some(truth) = &problem.truth else { return Ok(None) };
    let positions = problem.design.positions();
    let est: Vec<_> = estimate.active_set().iter().map(|&s| positions[s]).collect();
    Ok(Some(delta_stats(&est, &truth.positions, delta_mm)?))
}

/// `‖G(X̂ − X*)‖_F²` against the simulated truth.
pub fn true_risk(problem: &Problem, estimate: &SourceEstimate) -> Result<Option<f64>> {
    let Some(truth) = &problem.truth else { return Ok(None) };
    let diff = estimate.x().sub(&truth.x_true)?;
    Ok(Some(problem.design.g().matmul(&diff)?.frobenius_sq()))
}
