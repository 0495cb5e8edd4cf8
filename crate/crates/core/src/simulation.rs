//! Synthetic whitened forward problems with planted block-sparse sources.
//!
//! Sources sit on a Fibonacci lattice over a sphere (positions in mm). The
//! design is built from i.i.d. standard normal columns smoothed with a
//! Gaussian kernel over source positions, which correlates neighboring
//! sources the way a leadfield does, and every block is then scaled to unit
//! spectral norm. Planted sources carry a Hann-windowed sinusoid along a
//! random fixed orientation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Result};
use crate::linalg::{norm_sq, psd_top_eigenvalue, sqrt, Mat};
use crate::problem::{BlockDesign, Measurements, Position};

const STREAM_DESIGN: u64 = 0;
const STREAM_SOURCES: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Layout of the synthetic source space.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Geometry {
    /// Radius of the sphere carrying the sources.
    pub source_radius_mm: f64,
    /// Length scale of the Gaussian kernel correlating nearby sources.
    pub correlation_length_mm: f64,
    /// Minimal distance between planted sources.
    pub min_separation_mm: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { source_radius_mm: 45.0, correlation_length_mm: 20.0, min_separation_mm: 45.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimulationSpec {
    pub n_sensors: usize,
    pub n_sources: usize,
    pub n_orient: usize,
    pub n_times: usize,
    /// Number of planted sources.
    pub n_active: usize,
    /// RMS amplitude of each planted source time course.
    pub amplitude: f64,
    pub sigma: f64,
    /// Seeds the design and the planted sources.
    pub seed: u64,
    /// Seeds the noise; defaults to `seed`.
    pub noise_seed: Option<u64>,
    pub geometry: Geometry,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        default_scenario()
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_sensors >= 1, InvalidInput, "n_sensors must be >= 1");
        ensure!(self.n_sources >= 1, InvalidInput, "n_sources must be >= 1");
        ensure!(self.n_orient >= 1, InvalidInput, "n_orient must be >= 1");
        ensure!(self.n_times >= 1, InvalidInput, "n_times must be >= 1");
        ensure!(
            self.n_active <= self.n_sources,
            InvalidInput,
            "n_active ({}) exceeds n_sources ({})",
            self.n_active,
            self.n_sources
        );
        ensure!(
            self.amplitude >= 0.0 && self.amplitude.is_finite(),
            InvalidInput,
            "amplitude must be >= 0"
        );
        ensure!(
            self.amplitude > 0.0 || self.n_active == 0,
            InvalidInput,
            "planted sources need a positive amplitude"
        );
        ensure!(self.sigma > 0.0 && self.sigma.is_finite(), InvalidInput, "sigma must be > 0");
        let g = &self.geometry;
        ensure!(
            g.source_radius_mm > 0.0 && g.correlation_length_mm > 0.0 && g.min_separation_mm >= 0.0,
            InvalidInput,
            "geometry lengths must be positive"
        );
        Ok(())
    }
}

/// Ground truth of a simulated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub active_indices: Vec<usize>,
    pub positions: Vec<Position>,
    pub x_true: Mat,
    pub m_clean: Mat,
}

/// Desk-scale version of the two-source auditory setup: one planted source
/// per hemisphere, at least 45 mm apart, on a source sphere dense enough
/// (≈ 11 mm spacing) that neighbouring blocks are strongly correlated.
pub fn default_scenario() -> SimulationSpec {
    SimulationSpec {
        n_sensors: 50,
        n_sources: 200,
        n_orient: 3,
        n_times: 20,
        n_active: 2,
        amplitude: 8.0,
        sigma: 1.0,
        seed: 0,
        noise_seed: None,
        geometry: Geometry::default(),
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// `n` points spread evenly over a sphere of the given radius.
pub fn fibonacci_sphere(n: usize, radius: f64) -> Vec<Position> {
    let golden = core::f64::consts::PI * (3.0 - sqrt(5.0));
    (0..n)
        .map(|i| {
            let z = if n == 1 { 0.0 } else { 1.0 - 2.0 * (i as f64 + 0.5) / n as f64 };
            let rho = sqrt((1.0 - z * z).max(0.0));
            let theta = golden * i as f64;
            [radius * rho * libm::cos(theta), radius * rho * libm::sin(theta), radius * z]
        })
        .collect()
}

pub(crate) fn distance(a: &Position, b: &Position) -> f64 {
    sqrt((0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum())
}

fn smoothed_design(spec: &SimulationSpec, positions: &[Position]) -> Mat {
    let (n, s_count, o) = (spec.n_sensors, spec.n_sources, spec.n_orient);
    let mut r = rng(spec.seed, STREAM_DESIGN);
    let raw = Mat::from_fn(n, s_count * o, |_, _| normal(&mut r));
    let ell2 = 2.0 * spec.geometry.correlation_length_mm * spec.geometry.correlation_length_mm;
    let mut g = Mat::zeros(n, s_count * o);
    for s in 0..s_count {
        for s2 in 0..s_count {
            let d = distance(&positions[s], &positions[s2]);
            let k = libm::exp(-d * d / ell2);
            if k < 1e-12 {
                continue;
            }
            for i in 0..n {
                for c in 0..o {
                    g[(i, s * o + c)] += k * raw[(i, s2 * o + c)];
                }
            }
        }
    }
    // unit spectral norm per block
    for s in 0..s_count {
        let gram = Mat::from_fn(o, o, |a, b| (0..n).map(|i| g[(i, s * o + a)] * g[(i, s * o + b)]).sum());
        let norm = sqrt(psd_top_eigenvalue(&gram, 1e-15, 100_000));
        if norm > 0.0 {
            for i in 0..n {
                for c in 0..o {
                    g[(i, s * o + c)] /= norm;
                }
            }
        }
    }
    g
}

fn plant_sources(spec: &SimulationSpec, positions: &[Position], r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(spec.n_active);
    for k in 0..spec.n_active {
        // alternate hemispheres (sign of x), keep planted sources apart
        let left = k % 2 == 0;
        let far_enough = |s: &usize| {
            !chosen.contains(s)
                && chosen
                    .iter()
                    .all(|c| distance(&positions[*c], &positions[*s]) >= spec.geometry.min_separation_mm)
        };
        let mut candidates: Vec<usize> = (0..spec.n_sources)
            .filter(|s| (positions[*s][0] < 0.0) == left)
            .filter(far_enough)
            .collect();
        if candidates.is_empty() {
            candidates = (0..spec.n_sources).filter(far_enough).collect();
        }
        if candidates.is_empty() {
            candidates = (0..spec.n_sources).filter(|s| !chosen.contains(s)).collect();
        }
        chosen.push(candidates[r.random_range(0..candidates.len())]);
    }
    chosen
}

/// Unit-RMS Hann-windowed sinusoid.
fn time_course(n_times: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let cycles: f64 = r.random_range(1.0..3.0);
    let phase: f64 = r.random_range(0.0..core::f64::consts::TAU);
    let tf = n_times as f64;
    let mut f: Vec<f64> = (0..n_times)
        .map(|t| {
            let tt = t as f64;
            let window = 0.5 * (1.0 - libm::cos(core::f64::consts::TAU * (tt + 1.0) / (tf + 1.0)));
            window * libm::sin(core::f64::consts::TAU * cycles * tt / tf + phase)
        })
        .collect();
    let rms = sqrt(norm_sq(&f) / tf);
    if rms > 0.0 {
        f.iter_mut().for_each(|v| *v /= rms);
    }
    f
}

fn unit_orientation(n_orient: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut u: Vec<f64> = (0..n_orient).map(|_| normal(r)).collect();
        let nu = sqrt(norm_sq(&u));
        if nu > 1e-8 {
            u.iter_mut().for_each(|v| *v /= nu);
            return u;
        }
    }
}

/// Generates `(G, M, truth)` for `spec`. Fully determined by the seeds.
pub fn simulate(spec: &SimulationSpec) -> Result<(BlockDesign, Measurements, SimulationTruth)> {
    spec.validate()?;
    let (n, s_count, o, t) = (spec.n_sensors, spec.n_sources, spec.n_orient, spec.n_times);
    let positions = fibonacci_sphere(s_count, spec.geometry.source_radius_mm);
    let g = smoothed_design(spec, &positions);

    let mut r = rng(spec.seed, STREAM_SOURCES);
    let mut active = plant_sources(spec, &positions, &mut r);
    let mut x_true = Mat::zeros(s_count * o, t);
    for &s in &active {
        let u = unit_orientation(o, &mut r);
        let f = time_course(t, &mut r);
        for c in 0..o {
            for (tt, fv) in f.iter().enumerate() {
                x_true[(s * o + c, tt)] = spec.amplitude * u[c] * fv;
            }
        }
    }
    active.sort_unstable();

    let m_clean = g.matmul(&x_true)?;
    let mut noise = rng(spec.noise_seed.unwrap_or(spec.seed), STREAM_NOISE);
    let m = Mat::from_fn(n, t, |i, j| m_clean[(i, j)] + spec.sigma * normal(&mut noise));

    let truth_positions = active.iter().map(|&s| positions[s]).collect();
    let design = BlockDesign::new(g, o, positions)?;
    let meas = Measurements::new(m, spec.sigma)?;
    Ok((design, meas, SimulationTruth { active_indices: active, positions: truth_positions, x_true, m_clean }))
}

/// Small unstructured test problem: i.i.d. standard normal design, `n_planted`
/// random blocks with standard normal entries, noise of level `sigma`.
pub fn random_problem(
    seed: u64,
    n_sensors: usize,
    n_sources: usize,
    n_orient: usize,
    n_times: usize,
    n_planted: usize,
    sigma: f64,
) -> Result<(BlockDesign, Measurements, Mat)> {
    ensure!(n_planted <= n_sources, InvalidInput, "cannot plant {n_planted} of {n_sources} sources");
    let mut r = rng(seed, STREAM_DESIGN);
    let g = Mat::from_fn(n_sensors, n_sources * n_orient, |_, _| normal(&mut r));
    let mut x = Mat::zeros(n_sources * n_orient, n_times);
    let mut pool: Vec<usize> = (0..n_sources).collect();
    for _ in 0..n_planted {
        let s = pool.swap_remove(r.random_range(0..pool.len()));
        for c in 0..n_orient {
            for tt in 0..n_times {
                x[(s * n_orient + c, tt)] = normal(&mut r);
            }
        }
    }
    let clean = g.matmul(&x)?;
    let m = Mat::from_fn(n_sensors, n_times, |i, j| clean[(i, j)] + sigma * normal(&mut r));
    let design = BlockDesign::without_positions(g, n_orient)?;
    Ok((design, Measurements::new(m, sigma)?, x))
}
