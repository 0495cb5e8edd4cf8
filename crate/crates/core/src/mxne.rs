//! Convex mixed-norm estimate (MxNE):
//!
//! ```text
//! min_X ½‖M − GX‖_F² + λ Σ_s ‖X_s‖_F
//! ```
//!
//! solved by cyclic block coordinate descent. Each block step is the
//! proximal step on the block's quadratic majorizer,
//! `X_s ← BST(X_s + G_sᵀR / L_s, λ / L_s)` with `L_s = ‖G_s‖₂²`, so the
//! objective never increases. Convergence is certified by the duality gap.
//!
//! The solver also accepts per-block penalty factors, `λ_s = λ·c_s`. This is
//! the weighted problem used by the reweighted solver: solving with design
//! `G·W` in coordinates `X̃` and mapping back `X = W X̃` is the same problem
//! as penalizing `‖X_s‖_F` by `λ / w_s` in the original coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
use crate::irmxne::ReweightStep;
use crate::linalg::{axpy, norm_sq, psd_top_eigenvalue, solve_spd, sqrt, Mat};
use crate::problem::{BlockDesign, Measurements, SourceEstimate};

/// Stopping rule of the block coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SolverConfig {
    /// Duality-gap tolerance relative to `½‖M‖_F²`. The absolute tolerance
    /// actually used is reported in [`SolveReport::tol`].
    pub tol: f64,
    pub max_iter: usize,
    /// Sweeps between two duality-gap evaluations.
    pub gap_check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10_000, gap_check_every: 5 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.tol > 0.0 && self.tol.is_finite(), InvalidInput, "solver tol must be > 0");
        ensure!(self.max_iter >= 1, InvalidInput, "solver max_iter must be >= 1");
        ensure!(self.gap_check_every >= 1, InvalidInput, "gap_check_every must be >= 1");
        Ok(())
    }

    /// Absolute gap tolerance for measurements `m`.
    pub fn absolute_tol(&self, m: &Mat) -> f64 {
        let scale = 0.5 * m.frobenius_sq();
        if scale > 0.0 {
            self.tol * scale
        } else {
            self.tol
        }
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub estimate: SourceEstimate,
    /// Final duality gap of the (last) convex problem.
    pub gap: f64,
    /// Absolute gap tolerance that was targeted.
    pub tol: f64,
    /// Total block coordinate descent sweeps.
    pub sweeps: usize,
    pub converged: bool,
    /// One entry per reweighting iteration; empty for a plain MxNE solve.
    pub history: Vec<ReweightStep>,
}

/// Block structure of a design prepared for coordinate descent: `Gᵀ` stored
/// so that every block is a contiguous `O × N` slab, and the per-block
/// Lipschitz constants `L_s = ‖G_s‖₂²`.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    gt: Mat,
    lipschitz: Vec<f64>,
    n_orient: usize,
}

impl BlockOperator {
    pub fn new(design: &BlockDesign) -> Self {
        let gt = design.g().transpose();
        let o = design.n_orient();
        let lipschitz = (0..design.n_sources())
            .map(|s| {
                let gram = Mat::from_fn(o, o, |a, b| {
                    gt.row(s * o + a).iter().zip(gt.row(s * o + b)).map(|(x, y)| x * y).sum()
                });
                psd_top_eigenvalue(&gram, 1e-10, 10_000)
            })
            .collect();
        Self { gt, lipschitz, n_orient: o }
    }

    #[inline]
    pub fn n_sources(&self) -> usize {
        self.lipschitz.len()
    }

    #[inline]
    pub fn n_sensors(&self) -> usize {
        self.gt.cols()
    }

    #[inline]
    pub fn n_orient(&self) -> usize {
        self.n_orient
    }

    /// `‖G_s‖₂²` for every block.
    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    /// Writes `G_sᵀ R` (O × T, flat) into `out`.
    fn block_correlation(&self, s: usize, r: &Mat, out: &mut [f64]) {
        let t = r.cols();
        out.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..self.n_orient {
            let dst = &mut out[o * t..(o + 1) * t];
            for (n, &g) in self.gt.row(s * self.n_orient + o).iter().enumerate() {
                if g != 0.0 {
                    axpy(g, r.row(n), dst);
                }
            }
        }
    }

    /// `R -= G_s · delta` where `delta` is a flat O × T block.
    fn subtract_block(&self, s: usize, delta: &[f64], r: &mut Mat) {
        let t = r.cols();
        for n in 0..self.n_sensors() {
            let row = r.row_mut(n);
            for o in 0..self.n_orient {
                let g = self.gt[(s * self.n_orient + o, n)];
                if g != 0.0 {
                    axpy(-g, &delta[o * t..(o + 1) * t], row);
                }
            }
        }
    }

    /// `‖G_sᵀ R‖_F` for every block.
    pub fn correlation_norms(&self, r: &Mat) -> Vec<f64> {
        let mut buf = vec![0.0; self.n_orient * r.cols()];
        (0..self.n_sources())
            .map(|s| {
                self.block_correlation(s, r, &mut buf);
                sqrt(norm_sq(&buf))
            })
            .collect()
    }
}

/// Mutable state of the block coordinate descent. Exposed so that callers can
/// step the solver sweep by sweep.
#[derive(Debug, Clone)]
pub struct BcdState<'a> {
    op: &'a BlockOperator,
    m: &'a Mat,
    /// `λ_s` per block.
    penalties: Vec<f64>,
    x: Mat,
    r: Mat,
    buf: Vec<f64>,
}

impl<'a> BcdState<'a> {
    /// Starts from `init` (or zero). `factors` scales λ per block; `None`
    /// means the unweighted problem.
    pub fn new(
        op: &'a BlockOperator,
        m: &'a Mat,
        lambda: f64,
        factors: Option<&[f64]>,
        init: Option<&Mat>,
    ) -> Result<Self> {
        ensure!(lambda > 0.0 && lambda.is_finite(), InvalidInput, "lambda must be > 0, got {lambda}");
        ensure!(
            m.rows() == op.n_sensors(),
            Dimension,
            "measurements have {} rows, design has {} sensors",
            m.rows(),
            op.n_sensors()
        );
        let (p, t) = (op.n_sources() * op.n_orient, m.cols());
        let penalties: Vec<f64> = match factors {
            Some(f) => {
                ensure!(f.len() == op.n_sources(), Dimension, "{} weights for {} sources", f.len(), op.n_sources());
                ensure!(
                    f.iter().all(|c| *c > 0.0 && c.is_finite()),
                    InvalidInput,
                    "penalty factors must be positive and finite"
                );
                f.iter().map(|c| lambda * c).collect()
            }
            None => vec![lambda; op.n_sources()],
        };
        let mut x = match init {
            Some(x0) => {
                ensure!(x0.shape() == (p, t), Dimension, "init is {}x{}, expected {}x{}", x0.rows(), x0.cols(), p, t);
                x0.clone()
            }
            None => Mat::zeros(p, t),
        };
        for (s, &l) in op.lipschitz.iter().enumerate() {
            if l == 0.0 {
                x.rows_slice_mut(s * op.n_orient, (s + 1) * op.n_orient).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut r = m.clone();
        for s in 0..op.n_sources() {
            let block = x.rows_slice(s * op.n_orient, (s + 1) * op.n_orient);
            if block.iter().any(|v| *v != 0.0) {
                op.subtract_block(s, block, &mut r);
            }
        }
        let buf = vec![0.0; op.n_orient * t];
        Ok(Self { op, m, penalties, x, r, buf })
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    /// Current residual `M − GX`.
    pub fn residual(&self) -> &Mat {
        &self.r
    }

    pub fn into_x(self) -> Mat {
        self.x
    }

    /// Proximal step on block `s`.
    pub fn update_block(&mut self, s: usize) {
        let l = self.op.lipschitz[s];
        if l == 0.0 {
            return;
        }
        let o = self.op.n_orient;
        let t = self.r.cols();
        self.op.block_correlation(s, &self.r, &mut self.buf);
        let old = self.x.rows_slice(s * o, (s + 1) * o);
        let was_zero = old.iter().all(|v| *v == 0.0);
        // buf <- X_s + G_sᵀR / L_s, then shrink
        for (b, &xo) in self.buf.iter_mut().zip(old) {
            *b = xo + *b / l;
        }
        crate::problem::bst_in_place(&mut self.buf, self.penalties[s] / l);
        let now_zero = self.buf.iter().all(|v| *v == 0.0);
        if was_zero && now_zero {
            return;
        }
        // buf <- new − old, applied to the residual; then store the new block
        let block = self.x.rows_slice_mut(s * o, (s + 1) * o);
        for (b, xo) in self.buf.iter_mut().zip(block.iter_mut()) {
            let new = *b;
            *b = new - *xo;
            *xo = new;
        }
        debug_assert_eq!(self.buf.len(), o * t);
        self.op.subtract_block(s, &self.buf, &mut self.r);
    }

    /// One cyclic pass over blocks `0..S`.
    pub fn sweep(&mut self) {
        for s in 0..self.op.n_sources() {
            self.update_block(s);
        }
    }

    /// One cyclic pass over the given blocks only.
    pub fn sweep_blocks(&mut self, blocks: &[usize]) {
        for &s in blocks {
            self.update_block(s);
        }
    }

    /// Blocks that are currently nonzero.
    pub fn active_blocks(&self) -> Vec<usize> {
        let o = self.op.n_orient;
        (0..self.op.n_sources())
            .filter(|&s| self.x.rows_slice(s * o, (s + 1) * o).iter().any(|v| *v != 0.0))
            .collect()
    }

    /// Coefficients of `blocks`, concatenated.
    fn gather(&self, blocks: &[usize]) -> Vec<f64> {
        let o = self.op.n_orient;
        blocks.iter().flat_map(|&s| self.x.rows_slice(s * o, (s + 1) * o).iter().copied()).collect()
    }

    /// Replaces the coefficients of `blocks` (every other block must be
    /// zero) by `values` if that lowers the objective; otherwise leaves the
    /// state untouched. Returns whether the candidate was accepted.
    fn try_replace(&mut self, blocks: &[usize], values: &[f64]) -> bool {
        let o = self.op.n_orient;
        let width = o * self.r.cols();
        let before = self.objective();
        let (x_old, r_old) = (self.x.clone(), self.r.clone());
        self.r = self.m.clone();
        for (&s, block) in blocks.iter().zip(values.chunks(width)) {
            self.x.rows_slice_mut(s * o, (s + 1) * o).copy_from_slice(block);
            self.op.subtract_block(s, block, &mut self.r);
        }
        if self.objective() < before {
            true
        } else {
            self.x = x_old;
            self.r = r_old;
            false
        }
    }

    fn penalty(&self) -> f64 {
        let o = self.op.n_orient;
        (0..self.op.n_sources())
            .map(|s| self.penalties[s] * sqrt(norm_sq(self.x.rows_slice(s * o, (s + 1) * o))))
            .sum()
    }

    /// Primal objective `½‖R‖² + Σ λ_s ‖X_s‖_F`.
    pub fn objective(&self) -> f64 {
        0.5 * self.r.frobenius_sq() + self.penalty()
    }

    /// Primal minus dual objective at the rescaled residual.
    pub fn duality_gap(&self) -> f64 {
        let mut scale: f64 = 1.0;
        for (s, c) in self.op.correlation_norms(&self.r).into_iter().enumerate() {
            if self.op.lipschitz[s] > 0.0 {
                scale = scale.max(c / self.penalties[s]);
            }
        }
        gap_at_scale(self.m, &self.r, scale, self.objective())
    }

    /// Duality gap of the problem restricted to `blocks` (all other blocks
    /// held at zero). Only meaningful when every nonzero block is listed.
    fn restricted_gap(&mut self, blocks: &[usize]) -> f64 {
        let mut scale: f64 = 1.0;
        for &s in blocks {
            if self.op.lipschitz[s] > 0.0 {
                self.op.block_correlation(s, &self.r, &mut self.buf);
                scale = scale.max(sqrt(norm_sq(&self.buf)) / self.penalties[s]);
            }
        }
        gap_at_scale(self.m, &self.r, scale, self.objective())
    }
}

/// Number of past iterates combined by one Anderson extrapolation step.
const ANDERSON_DEPTH: usize = 5;

/// Anderson extrapolation of the fixed-point iterates `x_0, …, x_K`: the
/// affine combination `Σ c_k x_k` (k ≥ 1, `Σ c_k = 1`) whose matching
/// combination of successive differences has the smallest norm.
fn anderson_extrapolate(iterates: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = iterates.len() - 1;
    let diffs: Vec<Vec<f64>> =
        iterates.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect();
    let mut gram = Mat::from_fn(k, k, |i, j| diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum());
    let trace: f64 = (0..k).map(|i| gram[(i, i)]).sum();
    if trace.is_nan() || trace <= 0.0 {
        return None;
    }
    // light ridge: successive differences are nearly collinear near convergence
    for i in 0..k {
        gram[(i, i)] += 1e-12 * trace;
    }
    let z = solve_spd(&gram, &vec![1.0; k])?;
    let total: f64 = z.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return None;
    }
    let mut out = vec![0.0; iterates[0].len()];
    for (zk, xk) in z.iter().zip(&iterates[1..]) {
        axpy(zk / total, xk, &mut out);
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn gap_at_scale(m: &Mat, r: &Mat, scale: f64, primal: f64) -> f64 {
    // ½‖M‖² − ½‖M − R/scale‖²
    let dual: f64 = m
        .as_slice()
        .iter()
        .zip(r.as_slice())
        .map(|(&mi, &ri)| {
            let theta = ri / scale;
            0.5 * mi * mi - 0.5 * (mi - theta) * (mi - theta)
        })
        .sum();
    primal - dual
}

/// Runs block coordinate descent on a prepared operator. `factors` scale λ
/// per block (`None` for the plain problem).
pub fn solve_prepared(
    op: &BlockOperator,
    meas: &Measurements,
    lambda: f64,
    factors: Option<&[f64]>,
    init: Option<&Mat>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let tol = config.absolute_tol(meas.m());
    let mut state = BcdState::new(op, meas.m(), lambda, factors, init)?;
    let mut gap = state.duality_gap();
    let mut sweeps = 0;
    let mut converged = gap <= tol;
    // Active-set strategy: a full sweep lets blocks enter or leave, then the
    // nonzero blocks alone are iterated until their restricted problem is
    // solved, with an Anderson extrapolation attempted every few sweeps
    // (kept only if it lowers the objective); the full gap decides whether
    // another round is needed.
    while !converged && sweeps < config.max_iter {
        state.sweep();
        sweeps += 1;
        let active = state.active_blocks();
        if active.len() == op.n_sources() && sweeps % config.gap_check_every != 0 && sweeps < config.max_iter {
            continue;
        }
        if !active.is_empty() && active.len() < op.n_sources() {
            let mut inner = 0;
            let mut iterates = Vec::with_capacity(ANDERSON_DEPTH + 1);
            iterates.push(state.gather(&active));
            while sweeps < config.max_iter {
                state.sweep_blocks(&active);
                sweeps += 1;
                inner += 1;
                iterates.push(state.gather(&active));
                if iterates.len() == ANDERSON_DEPTH + 1 {
                    if let Some(candidate) = anderson_extrapolate(&iterates) {
                        state.try_replace(&active, &candidate);
                    }
                    iterates.clear();
                    iterates.push(state.gather(&active));
                }
                if inner % config.gap_check_every == 0 {
                    let restricted = state.restricted_gap(&active);
                    if !restricted.is_finite() {
                        return Err(Error::Numeric("block coordinate descent"));
                    }
                    if restricted <= 0.5 * tol {
                        break;
                    }
                }
            }
        }
        gap = state.duality_gap();
        if !gap.is_finite() {
            return Err(Error::Numeric("block coordinate descent"));
        }
        converged = gap <= tol;
    }
    if !converged {
        log::debug!("mxne: gap {gap:.3e} above tol {tol:.3e} after {sweeps} sweeps (lambda {lambda:.4e})");
    }
    let estimate = SourceEstimate::new(state.into_x(), op.n_orient())?;
    Ok(SolveReport { estimate, gap, tol, sweeps, converged, history: Vec::new() })
}

fn check_init(design: &BlockDesign, meas: &Measurements, init: Option<&SourceEstimate>) -> Result<()> {
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
    Ok(())
}

/// Solves the MxNE problem at `lambda`, warm-starting from `init` if given.
///
/// Non-convergence within `max_iter` is reported through
/// [`SolveReport::converged`], not as an error.
pub fn mxne_solve(
    design: &BlockDesign,
    meas: &Measurements,
    lambda: f64,
    init: Option<&SourceEstimate>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    check_init(design, meas, init)?;
    let op = BlockOperator::new(design);
    solve_prepared(&op, meas, lambda, None, init.map(|e| e.x()), config)
}

/// Duality gap of `X` for the MxNE problem at `lambda`.
pub fn duality_gap(design: &BlockDesign, meas: &Measurements, lambda: f64, x: &Mat) -> Result<f64> {
    let op = BlockOperator::new(design);
    let state = BcdState::new(&op, meas.m(), lambda, None, Some(x))?;
    Ok(state.duality_gap())
}

/// Largest violation of the optimality conditions of the MxNE problem:
/// `max(0, ‖G_sᵀR‖_F − λ)` on inactive blocks and
/// `‖G_sᵀR − λ X_s/‖X_s‖_F‖_F` on active ones.
pub fn kkt_violation(design: &BlockDesign, meas: &Measurements, lambda: f64, x: &Mat) -> Result<f64> {
    ensure!(lambda > 0.0, InvalidInput, "lambda must be > 0, got {lambda}");
    let r = crate::problem::residual(design, meas, x)?;
    let corr = design.g().t_matmul(&r)?;
    let o = design.n_orient();
    let mut worst: f64 = 0.0;
    for s in 0..design.n_sources() {
        let xs = x.rows_slice(s * o, (s + 1) * o);
        let cs = corr.rows_slice(s * o, (s + 1) * o);
        let nx = sqrt(norm_sq(xs));
        let v = if nx == 0.0 {
            (sqrt(norm_sq(cs)) - lambda).max(0.0)
        } else {
            sqrt(cs.iter().zip(xs).map(|(c, xv)| {
                let d = c - lambda * xv / nx;
                d * d
            }).sum())
        };
        worst = worst.max(v);
    }
    Ok(worst)
}
