//! Finite-difference Monte-Carlo SURE.
//!
//! For an estimator with fitted values `f(M) = G X̂(M)`,
//!
//! ```text
//! SURE = ‖M − f(M)‖_F² − N T σ² + 2σ² dof,
//! dof  ≈ (1/ε) ⟨f(M + εΔ) − f(M), Δ⟩,   Δ_{it} ~ N(0, 1)
//! ```
//!
//! with step `ε = 2σ / N^0.3`. The selector evaluates it along a λ grid with
//! one probe shared by every grid point and keeps the minimizer.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Error, Result};
use crate::irmxne::{irmxne_solve, ReweightConfig};
use crate::lambda_grid::{argmin_prefer_first, no_valid_point, warm_path, LambdaGrid};
use crate::linalg::Mat;
use crate::mxne::{BlockOperator, SolveReport};
use crate::problem::{BlockDesign, Measurements, SourceEstimate};

/// Finite-difference step `2σ / N^0.3`.
pub fn fd_step(sigma: f64, n_sensors: usize) -> f64 {
    2.0 * sigma / libm::pow(n_sensors as f64, 0.3)
}

/// Gaussian probe `Δ` and finite-difference step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeState {
    delta: Mat,
    eps_fd: f64,
    seed: u64,
    stream: u64,
}

impl ProbeState {
    /// Draws an `n × t` standard normal probe from `(seed, stream)`.
    pub fn draw(n: usize, t: usize, eps_fd: f64, seed: u64, stream: u64) -> Result<Self> {
        ensure!(eps_fd > 0.0 && eps_fd.is_finite(), InvalidInput, "finite-difference step must be > 0");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let delta = Mat::from_fn(n, t, |_, _| StandardNormal.sample(&mut rng));
        Ok(Self { delta, eps_fd, seed, stream })
    }

    pub fn delta(&self) -> &Mat {
        &self.delta
    }

    pub fn eps_fd(&self) -> f64 {
        self.eps_fd
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `M + εΔ`.
    pub fn perturb(&self, m: &Mat) -> Result<Mat> {
        m.add_scaled(self.eps_fd, &self.delta)
    }

    /// FNV-1a hash of the probe's bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.delta.as_slice() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Anything that maps observations to fitted values (`M ↦ G X̂(M)`).
pub trait FittedMap {
    fn fitted(&self, m: &Mat) -> Result<Mat>;
}

impl<F: Fn(&Mat) -> Result<Mat>> FittedMap for F {
    fn fitted(&self, m: &Mat) -> Result<Mat> {
        self(m)
    }
}

/// `(1/ε) ⟨f(M + εΔ) − f(M), Δ⟩`.
pub fn dof_from_fits(fit: &Mat, fit_perturbed: &Mat, probe: &ProbeState) -> Result<f64> {
    Ok(fit_perturbed.sub(fit)?.dot(probe.delta())? / probe.eps_fd)
}

/// Monte-Carlo divergence of an arbitrary estimator with a single probe.
pub fn fdmc_dof(estimator: &impl FittedMap, m: &Mat, probe: &ProbeState) -> Result<f64> {
    let fit = estimator.fitted(m)?;
    let fit_perturbed = estimator.fitted(&probe.perturb(m)?)?;
    dof_from_fits(&fit, &fit_perturbed, probe)
}

/// SURE value at one λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SureEval {
    pub lambda: f64,
    /// Position in the grid (0 for a standalone evaluation).
    pub index: usize,
    pub sure: f64,
    pub dof: f64,
    /// `‖M − G X^{(λ,1)}‖_F²`
    pub residual_energy: f64,
    /// Solution on the unperturbed data.
    pub estimate: SourceEstimate,
    /// False when any of the underlying solves did not converge.
    pub valid: bool,
}

/// `residual − N T σ² + 2σ² dof`.
pub fn sure_value(residual_energy: f64, dof: f64, n_entries: usize, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    residual_energy - n_entries as f64 * s2 + 2.0 * s2 * dof
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SureConfig {
    pub reweight: ReweightConfig,
    /// Monte-Carlo probes averaged into the divergence (1 reproduces the
    /// single-probe estimate).
    pub n_probes: usize,
}

impl Default for SureConfig {
    fn default() -> Self {
        Self { reweight: ReweightConfig::default(), n_probes: 1 }
    }
}

fn evaluate(
    design: &BlockDesign,
    meas: &Measurements,
    lambda: f64,
    index: usize,
    base: SolveReport,
    perturbed: &[(ProbeState, SolveReport)],
) -> Result<SureEval> {
    let fit = design.g().matmul(base.estimate.x())?;
    let residual_energy = meas.m().sub(&fit)?.frobenius_sq();
    let mut dof = 0.0;
    let mut valid = base.converged;
    for (probe, rep) in perturbed {
        let fit2 = design.g().matmul(rep.estimate.x())?;
        dof += dof_from_fits(&fit, &fit2, probe)?;
        valid &= rep.converged;
    }
    dof /= perturbed.len() as f64;
    let (n, t) = meas.m().shape();
    let sure = sure_value(residual_energy, dof, n * t, meas.sigma());
    Ok(SureEval { lambda, index, sure, dof, residual_energy, estimate: base.estimate, valid })
}

/// FDMC SURE at a single λ with cold reweighted solves on `M` and `M + εΔ`.
pub fn fdmc_sure(
    design: &BlockDesign,
    meas: &Measurements,
    lambda: f64,
    probe: &ProbeState,
    config: &ReweightConfig,
) -> Result<SureEval> {
    ensure!(
        probe.delta().shape() == meas.m().shape(),
        Dimension,
        "probe is {}x{}, measurements are {}x{}",
        probe.delta().rows(),
        probe.delta().cols(),
        meas.m().rows(),
        meas.m().cols()
    );
    let base = irmxne_solve(design, meas, lambda, config, None)?;
    let shifted = meas.with_data(probe.perturb(meas.m())?)?;
    let perturbed = irmxne_solve(design, &shifted, lambda, config, None)?;
    evaluate(design, meas, lambda, 0, base, &[(probe.clone(), perturbed)])
}

/// Outcome of SURE grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct SureSelection {
    pub lambda: f64,
    pub index: usize,
    /// One entry per grid point that could be evaluated, in grid order.
    pub curve: Vec<SureEval>,
    /// Grid points whose solves failed outright.
    pub failures: Vec<(usize, Error)>,
    pub eps_fd: f64,
    /// Fingerprint of every probe used (one per Monte-Carlo sample).
    pub probe_fingerprints: Vec<u64>,
}

impl SureSelection {
    pub fn selected(&self) -> &SureEval {
        self.curve.iter().find(|e| e.index == self.index).expect("selected point is on the curve")
    }
}

/// Grid search of the FDMC SURE. The probes are drawn once from `seed` and
/// shared by all grid points; both the original and the perturbed problems
/// are solved as warm-started paths. Exact ties go to the larger λ; invalid
/// points are skipped.
pub fn select_lambda_sure(
    design: &BlockDesign,
    meas: &Measurements,
    grid: &LambdaGrid,
    config: &SureConfig,
    seed: u64,
) -> Result<SureSelection> {
    config.reweight.validate()?;
    ensure!(config.n_probes >= 1, InvalidInput, "n_probes must be >= 1");
    ensure!(
        design.n_sensors() == meas.m().rows(),
        Dimension,
        "design has {} sensors but measurements have {} rows",
        design.n_sensors(),
        meas.m().rows()
    );
    let (n, t) = meas.m().shape();
    let eps_fd = fd_step(meas.sigma(), n);
    let op = BlockOperator::new(design);
    let probes = (0..config.n_probes as u64)
        .map(|r| ProbeState::draw(n, t, eps_fd, seed, r))
        .collect::<Result<Vec<_>>>()?;

    let base = warm_path(design, &op, meas, grid, &config.reweight);
    let mut perturbed = Vec::with_capacity(probes.len());
    for probe in &probes {
        let shifted = meas.with_data(probe.perturb(meas.m())?)?;
        perturbed.push(warm_path(design, &op, &shifted, grid, &config.reweight));
    }

    let mut curve = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (i, (base_i, &lam)) in base.into_iter().zip(grid.values()).enumerate() {
        let point = base_i.and_then(|b| {
            let reps = probes
                .iter()
                .zip(&perturbed)
                .map(|(p, path)| path[i].clone().map(|r| (p.clone(), r)))
                .collect::<Result<Vec<_>>>()?;
            evaluate(design, meas, lam, i, b, &reps)
        });
        match point {
            Ok(e) => curve.push(e),
            Err(e) => {
                log::warn!("sure: grid point {i} (lambda {lam:.4e}) failed: {e}");
                failures.push((i, e));
            }
        }
    }
    for e in curve.iter().filter(|e| !e.valid) {
        log::warn!("sure: grid point {} did not converge, skipped", e.index);
    }
    let best = argmin_prefer_first(curve.iter().map(|e| e.valid.then_some(e.sure)))
        .ok_or_else(|| no_valid_point("SURE"))?;
    Ok(SureSelection {
        lambda: curve[best].lambda,
        index: curve[best].index,
        curve,
        failures,
        eps_fd,
        probe_fingerprints: probes.iter().map(ProbeState::fingerprint).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda_grid::make_grid;
    use crate::problem::lambda_max;
    use crate::simulation::random_problem;

    #[test]
    fn fd_step_values() {
        assert_eq!(fd_step(1.0, 1), 2.0);
        assert!((fd_step(1.0, 1024) - 0.25).abs() < 1e-15);
        assert_eq!(fd_step(2.0, 1), 4.0);
    }

    #[test]
    fn probe_is_regenerable() {
        let a = ProbeState::draw(5, 4, 0.5, 7, 0).unwrap();
        let b = ProbeState::draw(5, 4, 0.5, 7, 0).unwrap();
        let c = ProbeState::draw(5, 4, 0.5, 7, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert!(ProbeState::draw(5, 4, 0.0, 7, 0).is_err());
    }

    #[test]
    fn zero_estimator_above_lambda_max() {
        let (design, meas, _) = random_problem(1, 20, 30, 3, 5, 3, 1.0).unwrap();
        let lmax = lambda_max(&design, &meas).unwrap();
        let probe = ProbeState::draw(20, 5, 1e-6, 3, 0).unwrap();
        let ev = fdmc_sure(&design, &meas, 10.0 * lmax, &probe, &ReweightConfig::default()).unwrap();
        assert!(ev.estimate.is_zero());
        assert_eq!(ev.dof, 0.0);
        assert_eq!(ev.sure, meas.m().frobenius_sq() - 100.0);
    }

    #[test]
    fn identity_estimator_dof_is_probe_energy() {
        let probe = ProbeState::draw(10, 10, 0.3, 5, 0).unwrap();
        let m = Mat::from_fn(10, 10, |i, j| (i * j) as f64);
        let dof = fdmc_dof(&|m: &Mat| Ok(m.clone()), &m, &probe).unwrap();
        assert!((dof - probe.delta().frobenius_sq()).abs() < 1e-9 * dof);
    }

    #[test]
    fn selection_contracts() {
        let (design, meas, _) = random_problem(4, 20, 30, 3, 5, 3, 1.0).unwrap();
        let lmax = lambda_max(&design, &meas).unwrap();
        let grid = make_grid(lmax, 6, 0.1).unwrap();
        let cfg = SureConfig::default();
        let a = select_lambda_sure(&design, &meas, &grid, &cfg, 11).unwrap();
        let b = select_lambda_sure(&design, &meas, &grid, &cfg, 11).unwrap();
        assert_eq!(a, b);
        let min = a.curve.iter().filter(|e| e.valid).map(|e| e.sure).fold(f64::INFINITY, f64::min);
        assert_eq!(a.selected().sure, min);
        for e in &a.curve {
            assert_eq!(e.sure, sure_value(e.residual_energy, e.dof, 100, 1.0));
        }
        let single = LambdaGrid::new(alloc::vec![0.5 * lmax]).unwrap();
        assert_eq!(select_lambda_sure(&design, &meas, &single, &cfg, 1).unwrap().lambda, 0.5 * lmax);
    }

    #[test]
    fn noiseless_sure_tracks_residual() {
        let (design, meas, _) = random_problem(6, 20, 30, 3, 5, 3, 1e-9).unwrap();
        let lmax = lambda_max(&design, &meas).unwrap();
        let grid = make_grid(lmax, 5, 0.1).unwrap();
        let sel = select_lambda_sure(&design, &meas, &grid, &SureConfig::default(), 2).unwrap();
        let best_fit = argmin_prefer_first(sel.curve.iter().map(|e| Some(e.residual_energy))).unwrap();
        assert_eq!(sel.index, sel.curve[best_fit].index);
    }
}
