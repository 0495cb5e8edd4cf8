//! The four subcommands. Every output is a pure function of the resolved
//! configuration, so reruns produce byte-identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sis_core::metrics::{summarize, AggregateSummary, RecoveryStats, RunSummary};
use sis_core::simulation::SimulationSpec;
use sis_core::{Mat, VERSION};

use crate::config::{ExperimentConfig, Method, Scenario};
use crate::error::{CliError, Result};
use crate::nmat::{write_nmat, write_positions};
use crate::run::{explained, load_problem, recovery, run_method, true_risk, Diagnostics, Problem};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn write_matrix(path: &Path, m: &Mat) -> Result<()> {
    write_nmat(path, m).map_err(CliError::format(path))
}

fn simulated_spec(cfg: &ExperimentConfig) -> Result<&SimulationSpec> {
    match &cfg.scenario {
        Scenario::Simulated(spec) => Ok(spec),
        Scenario::Files(_) => Err(CliError::Config("scenario: this command needs a simulated scenario".into())),
    }
}

#[derive(Serialize)]
struct TruthFile<'a> {
    version: &'a str,
    spec: &'a SimulationSpec,
    active_indices: &'a [usize],
    active_positions: &'a [[f64; 3]],
    clean_energy: f64,
    noise_energy: f64,
    x_true: &'a str,
}

/// Writes `G.nmat`, `M.nmat`, `X_true.nmat`, `positions.csv` and `truth.json`.
pub fn simulate_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let spec = simulated_spec(cfg)?;
    let problem = load_problem(cfg)?;
    let truth = problem.truth.as_ref().expect("simulated problems carry their truth");
    create_dir(out)?;
    write_matrix(&out.join("G.nmat"), problem.design.g())?;
    write_matrix(&out.join("M.nmat"), problem.meas.m())?;
    write_matrix(&out.join("X_true.nmat"), &truth.x_true)?;
    let positions_path = out.join("positions.csv");
    write_positions(&positions_path, problem.design.positions()).map_err(CliError::format(&positions_path))?;
    let noise = problem.meas.m().sub(&truth.m_clean)?;
    write_json(
        &out.join("truth.json"),
        &TruthFile {
            version: VERSION,
            spec,
            active_indices: &truth.active_indices,
            active_positions: &truth.positions,
            clean_energy: truth.m_clean.frobenius_sq(),
            noise_energy: noise.frobenius_sq(),
            x_true: "X_true.nmat",
        },
    )?;
    log::info!("simulate: wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct SelectionFile<'a> {
    version: &'a str,
    method: Method,
    lambda: f64,
    lambda_max: f64,
    lambda_ratio: f64,
    converged: bool,
    n_sources: usize,
    active_set: &'a [usize],
    explained_variance: Option<f64>,
    recovery: Option<RecoveryStats>,
    true_risk: Option<f64>,
    estimate: &'a str,
    diagnostics: &'a Diagnostics,
    config: &'a ExperimentConfig,
}

/// Runs the configured method and writes `selection.json` and
/// `estimate.nmat`.
pub fn select_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let method = cfg.method.ok_or_else(|| CliError::Config("method: required for select".into()))?;
    let problem = load_problem(cfg)?;
    let outcome = run_method(&problem, method, cfg, false)?;
    if !outcome.converged {
        log::warn!("select: {method} finished without convergence");
    }
    create_dir(out)?;
    write_matrix(&out.join("estimate.nmat"), outcome.estimate.x())?;
    write_json(
        &out.join("selection.json"),
        &SelectionFile {
            version: VERSION,
            method,
            lambda: outcome.lambda,
            lambda_max: outcome.lambda_max,
            lambda_ratio: outcome.lambda_ratio(),
            converged: outcome.converged,
            n_sources: outcome.estimate.active_set().len(),
            active_set: outcome.estimate.active_set(),
            explained_variance: explained(&problem, &outcome.estimate),
            recovery: recovery(&problem, &outcome.estimate, cfg.sweep.delta_mm)?,
            true_risk: true_risk(&problem, &outcome.estimate)?,
            estimate: "estimate.nmat",
            diagnostics: &outcome.diagnostics,
            config: cfg,
        },
    )?;
    log::info!("select: {method} picked lambda {:.6e} ({} sources)", outcome.lambda, outcome.estimate.active_set().len());
    Ok(())
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub amplitude: f64,
    pub seed: u64,
    pub lambda: f64,
    pub lambda_max: f64,
    pub lambda_ratio: f64,
    pub n_sources: usize,
    pub explained_variance: f64,
    pub precision: f64,
    pub recall: f64,
    /// `‖G(X̂ − X*)‖_F²`.
    pub true_risk: f64,
    /// Smallest true risk along the grid (grid methods that keep a path).
    pub grid_min_risk: Option<f64>,
    pub converged: bool,
}

fn sweep_task(cfg: &ExperimentConfig, base: &SimulationSpec, amplitude: f64, seed: u64) -> Result<Vec<ResultRow>> {
    let spec = SimulationSpec { amplitude, seed, noise_seed: None, ..base.clone() };
    let task_cfg = ExperimentConfig { scenario: Scenario::Simulated(spec), ..cfg.clone() };
    let task_cfg = ExperimentConfig {
        sure: crate::config::SureSettings { seed, ..cfg.sure },
        cv: crate::config::CvSettings { seed, ..cfg.cv },
        ..task_cfg
    };
    let problem = load_problem(&task_cfg)?;
    let mut rows = Vec::with_capacity(cfg.sweep.methods.len());
    for &method in &cfg.sweep.methods {
        let outcome = run_method(&problem, method, &task_cfg, true)?;
        rows.push(make_row(&problem, &outcome, amplitude, seed, cfg.sweep.delta_mm)?);
    }
    Ok(rows)
}

fn make_row(
    problem: &Problem,
    outcome: &crate::run::MethodOutcome,
    amplitude: f64,
    seed: u64,
    delta_mm: f64,
) -> Result<ResultRow> {
    let stats = recovery(problem, &outcome.estimate, delta_mm)?.expect("simulated");
    let grid_min_risk = match &outcome.path {
        Some(path) => {
            let mut best = f64::INFINITY;
            for (_, est) in path {
                best = best.min(true_risk(problem, est)?.expect("simulated"));
            }
            Some(best)
        }
        None => None,
    };
    Ok(ResultRow {
        method: outcome.method,
        amplitude,
        seed,
        lambda: outcome.lambda,
        lambda_max: outcome.lambda_max,
        lambda_ratio: outcome.lambda_ratio(),
        n_sources: outcome.estimate.active_set().len(),
        explained_variance: explained(problem, &outcome.estimate).unwrap_or(f64::NAN),
        precision: stats.precision,
        recall: stats.recall,
        true_risk: true_risk(problem, &outcome.estimate)?.expect("simulated"),
        grid_min_risk,
        converged: outcome.converged,
    })
}

/// Runs every (amplitude, seed) task on up to `jobs` threads. Rows come back
/// ordered by method (config order), amplitude (config order), then seed,
/// whatever the scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let base = simulated_spec(cfg)?;
    let tasks: Vec<(usize, f64, u64)> = cfg
        .sweep
        .amplitudes
        .iter()
        .enumerate()
        .flat_map(|(ai, &a)| (0..cfg.sweep.n_seeds).map(move |k| (ai, a, k)))
        .map(|(ai, a, k)| (ai, a, cfg.sweep.first_seed.wrapping_add(k)))
        .collect();
    let results: Vec<Mutex<Option<Result<Vec<ResultRow>>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, tasks.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(_, amplitude, seed)) = tasks.get(i) else { break };
                log::info!("sweep: amplitude {amplitude} seed {seed}");
                let res = sweep_task(cfg, base, amplitude, seed);
                *results[i].lock().expect("result slot") = Some(res);
            });
        }
    });
    let mut keyed = Vec::new();
    for ((ai, _, seed), slot) in tasks.iter().zip(results) {
        let rows = slot.into_inner().expect("result slot").expect("every task ran")?;
        for row in rows {
            let mi = cfg.sweep.methods.iter().position(|m| *m == row.method).expect("configured method");
            keyed.push(((mi, *ai, *seed), row));
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    version: &'a str,
    n_rows: usize,
    config: &'a ExperimentConfig,
}

/// Writes `results.csv` (and `sweep.json` with the resolved config).
pub fn sweep_cmd(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<()> {
    let rows = run_sweep(cfg, jobs)?;
    create_dir(out)?;
    write_results(&out.join("results.csv"), &rows)?;
    write_json(
        &out.join("sweep.json"),
        &SweepManifest { version: VERSION, n_rows: rows.len(), config: cfg },
    )?;
    log::info!("sweep: wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-amplitude statistics of one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeStats {
    pub amplitude: f64,
    pub n_runs: usize,
    pub median_precision: f64,
    pub median_recall: f64,
    pub median_n_sources: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_n_sources: f64,
    pub share_converged: f64,
    /// Share of runs whose true risk is within 1.5× the grid minimum
    /// (only for methods that report a grid minimum).
    pub share_risk_within_1_5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub overall: AggregateSummary,
    pub by_amplitude: Vec<AmplitudeStats>,
}

fn amplitude_stats(amplitude: f64, rows: &[&ResultRow]) -> AmplitudeStats {
    let n = rows.len() as f64;
    let col = |f: fn(&ResultRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (precision, recall) = (col(|r| r.precision), col(|r| r.recall));
    let sources = col(|r| r.n_sources as f64);
    let risk_ok: Vec<bool> =
        rows.iter().filter_map(|r| r.grid_min_risk.map(|m| r.true_risk <= 1.5 * m)).collect();
    AmplitudeStats {
        amplitude,
        n_runs: rows.len(),
        median_precision: median(&mut precision.clone()),
        median_recall: median(&mut recall.clone()),
        median_n_sources: median(&mut sources.clone()),
        mean_precision: mean(&precision),
        mean_recall: mean(&recall),
        mean_n_sources: mean(&sources),
        share_converged: rows.iter().filter(|r| r.converged).count() as f64 / n,
        share_risk_within_1_5: (!risk_ok.is_empty())
            .then(|| risk_ok.iter().filter(|&&b| b).count() as f64 / risk_ok.len() as f64),
    }
}

/// Groups rows by method (first-appearance order) and amplitude (ascending).
pub fn build_report(rows: &[ResultRow]) -> Result<Vec<MethodReport>> {
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method).collect();
            let runs: Vec<RunSummary> = mine
                .iter()
                .map(|r| RunSummary {
                    lambda_ratio: r.lambda_ratio,
                    explained_variance: r.explained_variance,
                    n_sources: r.n_sources,
                })
                .collect();
            let mut by_amp: BTreeMap<u64, Vec<&ResultRow>> = BTreeMap::new();
            for r in &mine {
                by_amp.entry(r.amplitude.to_bits()).or_default().push(r);
            }
            let mut by_amplitude: Vec<AmplitudeStats> =
                by_amp.into_iter().map(|(bits, rs)| amplitude_stats(f64::from_bits(bits), &rs)).collect();
            by_amplitude.sort_by(|a, b| a.amplitude.total_cmp(&b.amplitude));
            Ok(MethodReport { method, overall: summarize(&runs)?, by_amplitude })
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    version: &'a str,
    results: String,
    amplitude_filter: Option<f64>,
    n_rows: usize,
    methods: &'a [MethodReport],
}

/// Table layout: one row per metric, one column per method.
fn write_table(path: &Path, reports: &[MethodReport]) -> Result<()> {
    let err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["metric".to_string()];
    header.extend(reports.iter().map(|r| r.method.to_string()));
    w.write_record(&header).map_err(err)?;
    type Metric = (&'static str, fn(&AggregateSummary) -> f64);
    let metrics: [Metric; 7] = [
        ("lambda_over_lambda_max", |s| s.mean_lambda_ratio),
        ("explained_variance", |s| s.mean_explained_variance),
        ("mean_n_sources", |s| s.mean_n_sources),
        ("pct_0_sources", |s| s.pct_zero_sources),
        ("pct_1_source", |s| s.pct_one_source),
        ("pct_2_sources", |s| s.pct_two_sources),
        ("pct_more_sources", |s| s.pct_more_sources),
    ];
    for (name, get) in metrics {
        let mut rec = vec![name.to_string()];
        rec.extend(reports.iter().map(|r| format!("{:.4}", get(&r.overall))));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads `results`, writes `summary.json` and `table.csv` to `out`.
/// With `amplitude`, only rows at that amplitude enter the summary.
pub fn report_cmd(results: &Path, out: &Path, amplitude: Option<f64>) -> Result<()> {
    let mut rows = read_results(results)?;
    if let Some(a) = amplitude {
        rows.retain(|r| r.amplitude == a);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no result rows to report", results.display())));
    }
    let reports = build_report(&rows)?;
    create_dir(out)?;
    write_json(
        &out.join("summary.json"),
        &SummaryFile {
            version: VERSION,
            results: results.display().to_string(),
            amplitude_filter: amplitude,
            n_rows: rows.len(),
            methods: &reports,
        },
    )?;
    write_table(&out.join("table.csv"), &reports)
}

/// Default location of the sweep results for `report`.
pub fn default_results_path(out: &Path) -> PathBuf {
    out.join("results.csv")
}
