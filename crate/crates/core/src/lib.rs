//! Block-sparse multi-task solvers for linear inverse problems `M = G X + E`
//! and automatic selection of their regularization parameter.
//!
//! The crate is `no_std` (it needs `alloc`). It provides:
//!
//! - [`mxne`]: the convex mixed-norm estimate, solved by block coordinate
//!   descent with duality-gap certificates.
//! - [`irmxne`]: the iteratively reweighted estimate that minimizes the
//!   non-convex `λ Σ_s sqrt(‖X_s‖_F)` penalty by majorize-minimize.
//! - [`lambda_grid`]: geometric λ grids and the warm-started path solver.
//! - [`sure`], [`cv`], [`lmap`]: finite-difference Monte-Carlo SURE, spatial
//!   cross-validation and the λ-MAP fixed point.
//! - [`simulation`] and [`metrics`]: synthetic whitened problems with planted
//!   sources, and δ-precision / δ-recall recovery statistics.
//!
//! ```
//! use sis_core::simulation::{simulate, SimulationSpec};
//! use sis_core::irmxne::{irmxne_solve, ReweightConfig};
//! use sis_core::problem::lambda_max;
//!
//! let spec = SimulationSpec { n_sensors: 20, n_sources: 15, n_times: 5, ..SimulationSpec::default() };
//! let (design, meas, _truth) = simulate(&spec).unwrap();
//! let lam = 0.3 * lambda_max(&design, &meas).unwrap();
//! let report = irmxne_solve(&design, &meas, lam, &ReweightConfig::default(), None).unwrap();
//! assert!(report.estimate.active_set().len() <= 15);
//! ```

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod cv;
mod error;
pub mod irmxne;
pub mod lambda_grid;
pub mod linalg;
pub mod lmap;
pub mod metrics;
pub mod mxne;
pub mod problem;
pub mod simulation;
pub mod sure;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use problem::{BlockDesign, Measurements, SourceEstimate};

/// Library version string, embedded in exported artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
