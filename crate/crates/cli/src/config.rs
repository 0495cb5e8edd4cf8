//! Experiment configuration (JSON).
//!
//! Every section is optional and falls back to its defaults, so `{}` is a
//! valid configuration: the default simulated scenario. Unknown fields are
//! rejected, and schema errors name the offending field path.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sis_core::irmxne::ReweightConfig;
use sis_core::metrics::DEFAULT_DELTA_MM;
use sis_core::simulation::SimulationSpec;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sure,
    Cv,
    Lmap,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sure, Method::Cv, Method::Lmap];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sure => "sure",
            Method::Cv => "cv",
            Method::Lmap => "lmap",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Measurements and design read from disk. Relative paths are resolved
/// against the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileScenario {
    /// `N × (S·O)` design, `.nmat` or `.csv`.
    pub design: PathBuf,
    /// `N × T` measurements, `.nmat` or `.csv`.
    pub measurements: PathBuf,
    /// Optional `positions.csv` (one row per source, millimetres).
    #[serde(default)]
    pub positions: Option<PathBuf>,
    pub n_orient: usize,
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Simulated(SimulationSpec),
    Files(FileScenario),
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::Simulated(SimulationSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Number of grid points.
    pub n: usize,
    /// Smallest λ as a fraction of `λ_max`.
    pub ratio_min: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 20, ratio_min: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SureSettings {
    pub seed: u64,
    pub n_probes: usize,
}

impl Default for SureSettings {
    fn default() -> Self {
        Self { seed: 0, n_probes: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { folds: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmapSettings {
    /// Hyperprior β. Defaults to 10 for simulated data; must be given for
    /// file input, where its scale depends on the data.
    pub beta: Option<f64>,
    /// Initial λ as a fraction of `λ_max` (default ½).
    pub lambda0_ratio: Option<f64>,
    pub n_iter: usize,
    /// Fixed-point tolerance as a fraction of `λ_max` (default 1e-4).
    pub tol_ratio: Option<f64>,
}

impl Default for LmapSettings {
    fn default() -> Self {
        Self { beta: None, lambda0_ratio: None, n_iter: 10, tol_ratio: None }
    }
}

pub const DEFAULT_LMAP_BETA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub amplitudes: Vec<f64>,
    pub n_seeds: u64,
    pub first_seed: u64,
    pub methods: Vec<Method>,
    pub delta_mm: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            amplitudes: vec![1.0, 2.0, 4.0, 8.0],
            n_seeds: 20,
            first_seed: 0,
            methods: Method::ALL.to_vec(),
            delta_mm: DEFAULT_DELTA_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Scenario,
    /// Selection method for `select`.
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub reweight: ReweightConfig,
    #[serde(default)]
    pub sure: SureSettings,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default)]
    pub lmap: LmapSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            method: None,
            grid: GridConfig::default(),
            reweight: ReweightConfig::default(),
            sure: SureSettings::default(),
            cv: CvSettings::default(),
            lmap: LmapSettings::default(),
            sweep: SweepSettings::default(),
            out: default_out(),
        }
    }
}

fn config_error(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_error(field, format!("must be a positive finite number, got {v}")))
    }
}

impl ExperimentConfig {
    /// Parses JSON text. Schema errors are reported with the field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(format!("config: {inner}"))
            } else {
                config_error(&path, inner)
            }
        })
    }

    /// Reads a configuration file; relative input paths are made relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Scenario::Files(files) = &mut cfg.scenario {
            for p in [&mut files.design, &mut files.measurements].into_iter().chain(files.positions.as_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies command-line overrides. `seed` replaces every seed of the
    /// configuration (simulation, probes, folds, first sweep seed).
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(seed) = seed {
            if let Scenario::Simulated(spec) = &mut self.scenario {
                spec.seed = seed;
                spec.noise_seed = None;
            }
            self.sure.seed = seed;
            self.cv.seed = seed;
            self.sweep.first_seed = seed;
        }
        if let Some(out) = out {
            self.out = out;
        }
    }

    pub fn is_simulated(&self) -> bool {
        matches!(self.scenario, Scenario::Simulated(_))
    }

    /// β actually used by λ-MAP.
    pub fn lmap_beta(&self) -> Result<f64> {
        match (self.lmap.beta, self.is_simulated()) {
            (Some(b), _) => Ok(b),
            (None, true) => Ok(DEFAULT_LMAP_BETA),
            (None, false) => Err(config_error("lmap.beta", "required when the scenario reads files")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.scenario {
            Scenario::Simulated(spec) => spec.validate().map_err(|e| config_error("scenario.simulated", e))?,
            Scenario::Files(f) => {
                if f.n_orient == 0 {
                    return Err(config_error("scenario.files.n_orient", "must be >= 1"));
                }
                positive("scenario.files.sigma", f.sigma)?;
            }
        }
        if self.grid.n == 0 {
            return Err(config_error("grid.n", "must be >= 1"));
        }
        if !(self.grid.ratio_min > 0.0 && self.grid.ratio_min <= 1.0) {
            return Err(config_error("grid.ratio_min", format!("must be in (0, 1], got {}", self.grid.ratio_min)));
        }
        if self.grid.n > 1 && self.grid.ratio_min == 1.0 {
            return Err(config_error("grid.ratio_min", "must be < 1 for more than one grid point"));
        }
        self.reweight.validate().map_err(|e| config_error("reweight", e))?;
        if self.sure.n_probes == 0 {
            return Err(config_error("sure.n_probes", "must be >= 1"));
        }
        if self.cv.folds < 2 {
            return Err(config_error("cv.folds", "must be >= 2"));
        }
        if let Some(b) = self.lmap.beta {
            positive("lmap.beta", b)?;
        }
        if let Some(r) = self.lmap.lambda0_ratio {
            positive("lmap.lambda0_ratio", r)?;
        }
        if let Some(r) = self.lmap.tol_ratio {
            positive("lmap.tol_ratio", r)?;
        }
        if self.lmap.n_iter == 0 {
            return Err(config_error("lmap.n_iter", "must be >= 1"));
        }
        if self.sweep.amplitudes.is_empty() {
            return Err(config_error("sweep.amplitudes", "must not be empty"));
        }
        for a in &self.sweep.amplitudes {
            positive("sweep.amplitudes", *a)?;
        }
        if self.sweep.n_seeds == 0 {
            return Err(config_error("sweep.n_seeds", "must be >= 1"));
        }
        if self.sweep.methods.is_empty() {
            return Err(config_error("sweep.methods", "must not be empty"));
        }
        if !(self.sweep.delta_mm >= 0.0 && self.sweep.delta_mm.is_finite()) {
            return Err(config_error("sweep.delta_mm", "must be >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.lmap_beta().unwrap(), DEFAULT_LMAP_BETA);
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = ExperimentConfig { method: Some(Method::Cv), ..Default::default() };
        cfg.lmap.beta = Some(3.0);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = ExperimentConfig::from_json(r#"{"grid": {"n": "many"}}"#).unwrap_err();
        assert!(err.to_string().starts_with("grid.n:"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"cv": {"fold": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("fold"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"method": "bayes"}"#).unwrap_err();
        assert!(err.to_string().starts_with("method:"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"scenario": {"simulated": {"n_sensors": -1}}}"#).unwrap_err();
        assert!(err.to_string().starts_with("scenario.simulated.n_sensors:"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        type Case = (&'static str, fn(&mut ExperimentConfig));
        let cases: [Case; 5] = [
            ("grid.n", |c| c.grid.n = 0),
            ("grid.ratio_min", |c| c.grid.ratio_min = 0.0),
            ("cv.folds", |c| c.cv.folds = 1),
            ("sweep.amplitudes", |c| c.sweep.amplitudes.clear()),
            ("reweight", |c| c.reweight.k = 0),
        ];
        for (field, mutate) in cases {
            let mut cfg = ExperimentConfig::default();
            mutate(&mut cfg);
            let err = cfg.validate().unwrap_err();
            assert!(err.to_string().starts_with(field), "{field}: {err}");
            assert_eq!(err.kind(), "config");
        }
    }

    #[test]
    fn file_scenario_needs_beta() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": {"files": {"design": "G.nmat", "measurements": "M.nmat", "n_orient": 3}}}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let err = cfg.lmap_beta().unwrap_err();
        assert!(err.to_string().starts_with("lmap.beta"), "{err}");
    }

    #[test]
    fn seed_override_reaches_every_seed() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(Some(7), Some(PathBuf::from("x")));
        let Scenario::Simulated(spec) = &cfg.scenario else { unreachable!() };
        assert_eq!((spec.seed, cfg.sure.seed, cfg.cv.seed, cfg.sweep.first_seed), (7, 7, 7, 7));
        assert_eq!(cfg.out, PathBuf::from("x"));
    }
}
