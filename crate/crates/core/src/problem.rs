//! Data model of the inverse problem `M = G X + E` and the scalar quantities
//! shared by every solver: block norms, objectives, `λ_max`, explained
//! variance and block soft-thresholding.

use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::linalg::{norm_sq, sqrt, Mat};

/// A 3-D position in millimeters.
pub type Position = [f64; 3];

/// Design matrix `G` (N × P) whose columns are grouped into `S` source blocks
/// of `O` consecutive columns, with one position per source.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDesign {
    g: Mat,
    n_orient: usize,
    positions: Vec<Position>,
}

impl BlockDesign {
    pub fn new(g: Mat, n_orient: usize, positions: Vec<Position>) -> Result<Self> {
        ensure!(n_orient >= 1, InvalidInput, "orientations per source must be >= 1");
        ensure!(
            g.cols().is_multiple_of(n_orient),
            Dimension,
            "{} columns are not a multiple of {} orientations",
            g.cols(),
            n_orient
        );
        let n_sources = g.cols() / n_orient;
        ensure!(
            positions.len() == n_sources,
            Dimension,
            "{} positions for {} sources",
            positions.len(),
            n_sources
        );
        ensure!(g.is_finite(), InvalidInput, "design matrix has non-finite entries");
        ensure!(
            positions.iter().flatten().all(|v| v.is_finite()),
            InvalidInput,
            "source positions must be finite"
        );
        Ok(Self { g, n_orient, positions })
    }

    /// Design without meaningful geometry: every source sits at the origin.
    pub fn without_positions(g: Mat, n_orient: usize) -> Result<Self> {
        let n_sources = g.cols().checked_div(n_orient).unwrap_or(0);
        Self::new(g, n_orient, alloc::vec![[0.0; 3]; n_sources])
    }

    #[inline]
    pub fn g(&self) -> &Mat {
        &self.g
    }

    #[inline]
    pub fn n_sensors(&self) -> usize {
        self.g.rows()
    }

    #[inline]
    pub fn n_columns(&self) -> usize {
        self.g.cols()
    }

    #[inline]
    pub fn n_sources(&self) -> usize {
        self.g.cols() / self.n_orient
    }

    #[inline]
    pub fn n_orient(&self) -> usize {
        self.n_orient
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    /// Column range of source block `s`.
    #[inline]
    pub fn block_range(&self, s: usize) -> core::ops::Range<usize> {
        s * self.n_orient..(s + 1) * self.n_orient
    }

    /// The N × O column slice of source `s`.
    pub fn block(&self, s: usize) -> Mat {
        let r = self.block_range(s);
        self.g.col_range(r.start, r.end)
    }

    /// Design restricted to the given sensors (rows).
    pub fn select_sensors(&self, rows: &[usize]) -> BlockDesign {
        BlockDesign {
            g: self.g.select_rows(rows),
            n_orient: self.n_orient,
            positions: self.positions.clone(),
        }
    }
}

/// Observation matrix `M` (N × T) and its known noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    m: Mat,
    sigma: f64,
}

impl Measurements {
    pub fn new(m: Mat, sigma: f64) -> Result<Self> {
        ensure!(m.cols() >= 1, InvalidInput, "measurements need at least one time sample");
        ensure!(sigma > 0.0 && sigma.is_finite(), InvalidInput, "sigma must be positive, got {sigma}");
        ensure!(m.is_finite(), InvalidInput, "measurements have non-finite entries");
        Ok(Self { m, sigma })
    }

    /// Whitened measurements (`sigma = 1`).
    pub fn whitened(m: Mat) -> Result<Self> {
        Self::new(m, 1.0)
    }

    #[inline]
    pub fn m(&self) -> &Mat {
        &self.m
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn n_times(&self) -> usize {
        self.m.cols()
    }

    pub fn with_data(&self, m: Mat) -> Result<Self> {
        Self::new(m, self.sigma)
    }

    pub fn select_sensors(&self, rows: &[usize]) -> Measurements {
        Measurements { m: self.m.select_rows(rows), sigma: self.sigma }
    }
}

/// Coefficient matrix `X` (P × T) together with its block norms and support.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEstimate {
    x: Mat,
    n_orient: usize,
    block_norms: Vec<f64>,
    active_set: Vec<usize>,
}

impl SourceEstimate {
    pub fn new(x: Mat, n_orient: usize) -> Result<Self> {
        let block_norms = block_norms(&x, n_orient)?;
        let active_set = support_of(&block_norms);
        Ok(Self { x, n_orient, block_norms, active_set })
    }

    pub fn zeros(n_columns: usize, n_times: usize, n_orient: usize) -> Result<Self> {
        Self::new(Mat::zeros(n_columns, n_times), n_orient)
    }

    #[inline]
    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn into_matrix(self) -> Mat {
        self.x
    }

    #[inline]
    pub fn n_orient(&self) -> usize {
        self.n_orient
    }

    pub fn block_norms(&self) -> &[f64] {
        &self.block_norms
    }

    /// Sources with a nonzero block, in increasing order.
    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }

    pub fn is_zero(&self) -> bool {
        self.active_set.is_empty()
    }
}

fn support_of(norms: &[f64]) -> Vec<usize> {
    norms.iter().enumerate().filter(|(_, &n)| n != 0.0).map(|(s, _)| s).collect()
}

/// Frobenius norm of every `O × T` row block of `x`.
pub fn block_norms(x: &Mat, n_orient: usize) -> Result<Vec<f64>> {
    ensure!(n_orient >= 1, InvalidInput, "orientations per source must be >= 1");
    ensure!(
        x.rows().is_multiple_of(n_orient),
        Dimension,
        "{} rows are not a multiple of {} orientations",
        x.rows(),
        n_orient
    );
    let s_count = x.rows() / n_orient;
    Ok((0..s_count)
        .map(|s| sqrt(norm_sq(x.rows_slice(s * n_orient, (s + 1) * n_orient))))
        .collect())
}

fn check_shapes(design: &BlockDesign, meas: &Measurements) -> Result<()> {
    ensure!(
        design.n_sensors() == meas.m().rows(),
        Dimension,
        "design has {} sensors but measurements have {} rows",
        design.n_sensors(),
        meas.m().rows()
    );
    Ok(())
}

fn check_estimate(design: &BlockDesign, meas: &Measurements, x: &Mat) -> Result<()> {
    check_shapes(design, meas)?;
    ensure!(
        x.shape() == (design.n_columns(), meas.n_times()),
        Dimension,
        "estimate is {}x{}, expected {}x{}",
        x.rows(),
        x.cols(),
        design.n_columns(),
        meas.n_times()
    );
    Ok(())
}

/// `‖Gᵀ M‖_{2,∞}` read blockwise: `max_s ‖G_sᵀ M‖_F`.
///
/// This is the smallest λ for which `X = 0` minimizes the mixed-norm problem.
pub fn lambda_max(design: &BlockDesign, meas: &Measurements) -> Result<f64> {
    check_shapes(design, meas)?;
    let gtm = design.g().t_matmul(meas.m())?;
    Ok(block_norms(&gtm, design.n_orient())?.into_iter().fold(0.0, f64::max))
}

/// `M - G X`.
pub fn residual(design: &BlockDesign, meas: &Measurements, x: &Mat) -> Result<Mat> {
    check_estimate(design, meas, x)?;
    meas.m().sub(&design.g().matmul(x)?)
}

/// `½‖M − GX‖_F² + λ Σ_s ‖X_s‖_F`
pub fn objective_mxne(design: &BlockDesign, meas: &Measurements, x: &Mat, lambda: f64) -> Result<f64> {
    ensure!(lambda >= 0.0, InvalidInput, "lambda must be >= 0, got {lambda}");
    let r = residual(design, meas, x)?;
    let penalty: f64 = block_norms(x, design.n_orient())?.iter().sum();
    Ok(0.5 * r.frobenius_sq() + lambda * penalty)
}

/// `½‖M − GX‖_F² + λ Σ_s sqrt(‖X_s‖_F)`
pub fn objective_irmxne(design: &BlockDesign, meas: &Measurements, x: &Mat, lambda: f64) -> Result<f64> {
    ensure!(lambda >= 0.0, InvalidInput, "lambda must be >= 0, got {lambda}");
    let r = residual(design, meas, x)?;
    let penalty: f64 = block_norms(x, design.n_orient())?.iter().map(|&n| sqrt(n)).sum();
    Ok(0.5 * r.frobenius_sq() + lambda * penalty)
}

/// `1 − ‖M − GX‖_F² / ‖M‖_F²`. Can be negative for poor fits.
pub fn explained_variance(design: &BlockDesign, meas: &Measurements, x: &Mat) -> Result<f64> {
    let total = meas.m().frobenius_sq();
    if total == 0.0 {
        return Err(Error::InvalidInput("explained variance undefined for M = 0".into()));
    }
    let r = residual(design, meas, x)?;
    Ok(1.0 - r.frobenius_sq() / total)
}

/// Proximal operator of `τ‖·‖_F`: `Y · max(0, 1 − τ/‖Y‖_F)`.
///
/// Returns an exact zero matrix when `‖Y‖_F ≤ τ`.
pub fn block_soft_threshold(y: &Mat, tau: f64) -> Mat {
    let mut out = y.clone();
    bst_in_place(out.as_mut_slice(), tau);
    out
}

/// In-place block soft-thresholding of a flat block. Returns the new norm.
#[inline]
pub(crate) fn bst_in_place(block: &mut [f64], tau: f64) -> f64 {
    let norm = sqrt(norm_sq(block));
    if norm <= tau {
        block.iter_mut().for_each(|v| *v = 0.0);
        0.0
    } else {
        let shrink = 1.0 - tau / norm;
        block.iter_mut().for_each(|v| *v *= shrink);
        norm * shrink
    }
}
