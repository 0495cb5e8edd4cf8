//! Regularization grids and the warm-started path solver.

use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::irmxne::{reweight_from, ReweightConfig};
use crate::linalg::Mat;
use crate::mxne::{solve_prepared, BlockOperator, SolveReport};
use crate::problem::{BlockDesign, Measurements};

/// Strictly decreasing positive λ values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure!(!values.is_empty(), InvalidInput, "empty lambda grid");
        ensure!(
            values.iter().all(|v| *v > 0.0 && v.is_finite()),
            InvalidInput,
            "lambda values must be positive and finite"
        );
        ensure!(
            values.windows(2).all(|w| w[1] < w[0]),
            InvalidInput,
            "lambda values must be strictly decreasing"
        );
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `λ_n / λ_1`.
    pub fn ratio_min(&self) -> f64 {
        self.values[self.values.len() - 1] / self.values[0]
    }
}

/// Geometric grid of `n` points from `lambda_max` down to
/// `ratio_min · lambda_max`.
pub fn make_grid(lambda_max: f64, n: usize, ratio_min: f64) -> Result<LambdaGrid> {
    ensure!(lambda_max > 0.0 && lambda_max.is_finite(), InvalidInput, "lambda_max must be > 0");
    ensure!(n >= 1, InvalidInput, "grid needs at least one point");
    ensure!(ratio_min > 0.0 && ratio_min < 1.0, InvalidInput, "ratio_min must lie in (0, 1), got {ratio_min}");
    if n == 1 {
        return LambdaGrid::new(alloc::vec![lambda_max]);
    }
    let log_ratio = libm::log(ratio_min);
    let values = (0..n)
        .map(|i| lambda_max * libm::exp(log_ratio * i as f64 / (n - 1) as f64))
        .collect();
    LambdaGrid::new(values)
}

/// Plain MxNE solves along the grid, each warm-started from the previous λ.
///
/// A failing point is recorded and the next one restarts from the last
/// successful solution.
pub fn mxne_path(
    op: &BlockOperator,
    meas: &Measurements,
    grid: &LambdaGrid,
    config: &ReweightConfig,
) -> Vec<Result<SolveReport>> {
    let mut out: Vec<Result<SolveReport>> = Vec::with_capacity(grid.len());
    let mut warm: Option<Mat> = None;
    for &lam in grid.values() {
        let rep = solve_prepared(op, meas, lam, None, warm.as_ref(), &config.inner);
        if let Ok(r) = &rep {
            warm = Some(r.estimate.x().clone());
        }
        out.push(rep);
    }
    out
}

/// Warm-started reweighted path.
///
/// Phase 1 solves the unweighted problems sequentially over the grid, each
/// from the previous λ's solution. Phase 2 runs the remaining `K − 1`
/// reweightings for every λ, starting from that λ's phase-1 solution.
/// Results are in grid order; a failing point does not abort the path.
pub fn solve_path_warm(
    design: &BlockDesign,
    meas: &Measurements,
    grid: &LambdaGrid,
    config: &ReweightConfig,
) -> Result<Vec<Result<SolveReport>>> {
    config.validate()?;
    ensure!(
        design.n_sensors() == meas.m().rows(),
        Dimension,
        "design has {} sensors but measurements have {} rows",
        design.n_sensors(),
        meas.m().rows()
    );
    let op = BlockOperator::new(design);
    Ok(warm_path(design, &op, meas, grid, config))
}

pub(crate) fn warm_path(
    design: &BlockDesign,
    op: &BlockOperator,
    meas: &Measurements,
    grid: &LambdaGrid,
    config: &ReweightConfig,
) -> Vec<Result<SolveReport>> {
    let phase1 = mxne_path(op, meas, grid, config);
    phase1
        .into_iter()
        .zip(grid.values())
        .map(|(first, &lam)| first.and_then(|f| reweight_from(design, op, meas, lam, config, f)))
        .collect()
}

/// Index of the smallest finite value; exact ties go to the earlier (larger
/// λ) index.
pub(crate) fn argmin_prefer_first(values: impl IntoIterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let Some(v) = v else { continue };
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) fn no_valid_point(what: &str) -> Error {
    Error::Selection(alloc::format!("{what}: every grid point failed"))
}
