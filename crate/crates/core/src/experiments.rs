//! Experiment runners behind the command-line tool: single solves, secrecy
//! and power sweeps, and allocation-versus-baseline comparisons.
//!
//! Sweep points run concurrently on a pool of `workers` threads; all files
//! are written afterwards by the calling thread.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::AngleGrid;
use crate::optimizer::{optimize_allocation, solve_baseline, OptimizerError, OptimizerOptions, TraceRecord};
use crate::par::{self, Execution};
use crate::report::{write_trace_jsonl, DesignReport};
use crate::scenario::{build_channels, dbm_to_mw, parse_scenario, LambdaGridSpec, ScenarioConfig, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    SweepSecrecy,
    SweepPower,
    CompareAllocation,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub scenario: PathBuf,
    pub out_dir: PathBuf,
    /// Secrecy floors (bits/s/Hz) or total powers (dBm), strictly increasing.
    pub sweep_values: Vec<f64>,
    pub seed: u64,
    pub rf_links: Option<usize>,
    pub workers: usize,
    pub lambda_grid: Option<LambdaGridSpec>,
    /// Overrides the scenario's total power.
    pub total_power_dbm: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(mode: Mode, scenario: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            scenario: scenario.into(),
            out_dir: out_dir.into(),
            sweep_values: Vec::new(),
            seed: 0,
            rf_links: None,
            workers: 1,
            lambda_grid: None,
            total_power_dbm: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Usage(String),
    #[error("scenario {path}: {source}")]
    Scenario { path: String, source: ScenarioError },
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) | ExperimentError::Scenario { .. } => EXIT_USAGE,
            ExperimentError::Optimizer(OptimizerError::InvalidScenario(_)) => EXIT_USAGE,
            ExperimentError::Optimizer(e) if e.is_numerical() => EXIT_NUMERICAL,
            ExperimentError::Optimizer(_) => EXIT_INFEASIBLE,
            ExperimentError::Io { .. } => EXIT_IO,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn validate_spec(spec: &ExperimentSpec) -> Result<(), ExperimentError> {
    if spec.sweep_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ExperimentError::Usage("sweep values must be strictly increasing".into()));
    }
    if spec.sweep_values.iter().any(|v| !v.is_finite()) {
        return Err(ExperimentError::Usage("sweep values must be finite".into()));
    }
    if spec.workers == 0 {
        return Err(ExperimentError::Usage("--workers must be at least 1".into()));
    }
    Ok(())
}

/// Reads the scenario and applies the spec's overrides.
pub fn load_scenario(spec: &ExperimentSpec) -> Result<ScenarioConfig, ExperimentError> {
    let text = fs::read_to_string(&spec.scenario).map_err(|e| {
        ExperimentError::Usage(format!("cannot read scenario file {}: {e}", spec.scenario.display()))
    })?;
    let scenario_err = |source| ExperimentError::Scenario {
        path: spec.scenario.display().to_string(),
        source,
    };
    let mut cfg = parse_scenario(&text).map_err(scenario_err)?;
    if let Some(g) = spec.rf_links {
        cfg.num_rf_links = g;
    }
    if let Some(grid) = spec.lambda_grid {
        cfg.lambda_grid = grid;
    }
    if let Some(p) = spec.total_power_dbm {
        cfg = cfg.with_total_power(dbm_to_mw(p));
    }
    cfg.validate().map_err(scenario_err)?;
    Ok(cfg)
}

fn prepare_out_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let probe = dir.join(".write-probe");
    File::create(&probe).map_err(io_err(dir))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn options(exec: Execution) -> OptimizerOptions {
    OptimizerOptions {
        execution: exec,
        ..OptimizerOptions::default()
    }
}

fn solve_scenario(cfg: &ScenarioConfig, seed: u64, exec: Execution) -> Result<DesignReport, OptimizerError> {
    let start = Instant::now();
    let channels = build_channels(cfg);
    let grid = AngleGrid::for_scenario(cfg);
    let outcome = optimize_allocation(cfg, &channels, &grid, &options(exec))?;
    let mut report = DesignReport::from_outcome(cfg, &channels, &grid, &outcome, Some(seed), exec);
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn solve_baseline_report(cfg: &ScenarioConfig, seed: u64, exec: Execution) -> Result<DesignReport, OptimizerError> {
    let start = Instant::now();
    let channels = build_channels(cfg);
    let grid = AngleGrid::for_scenario(cfg);
    let (polished, trace) = solve_baseline(cfg, &channels, &grid, &options(exec))?;
    let mut report = DesignReport::from_polished(cfg, &channels, &grid, &polished, Some(seed), exec);
    report.trace = trace;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn summarize(report: &DesignReport) {
    log::info!(
        "K = {:.6e} mW^2, R_s = {:.4} bit/s/Hz, support {:?}, {:.1} s",
        report.matching_error_mw2,
        report.secrecy_rate,
        report.support,
        report.wall_seconds
    );
}

/// Solves the scenario and writes `report.json`, `beampattern.csv` and
/// `trace.jsonl`.
pub fn run_solve(spec: &ExperimentSpec) -> Result<DesignReport, ExperimentError> {
    validate_spec(spec)?;
    let cfg = load_scenario(spec)?;
    prepare_out_dir(&spec.out_dir)?;
    let exec = Execution::default();
    let report = par::with_workers(spec.workers, || solve_scenario(&cfg, spec.seed, exec))?;
    summarize(&report);
    let grid = AngleGrid::for_scenario(&cfg);
    write_file(&spec.out_dir.join("report.json"), |w| writeln!(w, "{}", report.to_json()))?;
    write_file(&spec.out_dir.join("beampattern.csv"), |w| report.write_beampattern_csv(w, &grid))?;
    write_file(&spec.out_dir.join("trace.jsonl"), |w| write_trace_jsonl(w, &report.trace, None, None))?;
    Ok(report)
}

/// One row of a secrecy sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SecrecyPoint {
    pub secrecy_floor: f64,
    pub status: String,
    /// `g^H W_c g` per untrusted target, in scenario order.
    pub eavesdropper_power_mw: Vec<f64>,
    pub secrecy_rate: Option<f64>,
    pub matching_error_mw2: Option<f64>,
    pub eavesdroppers_symmetric: Option<bool>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl SecrecyPoint {
    pub fn max_eavesdropper_power(&self) -> Option<f64> {
        if self.eavesdropper_power_mw.is_empty() {
            None
        } else {
            Some(self.eavesdropper_power_mw.iter().copied().fold(0.0, f64::max))
        }
    }
}

fn status_of(e: &OptimizerError) -> String {
    if e.is_numerical() {
        format!("numerical-failure: {e}")
    } else {
        format!("infeasible: {e}")
    }
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Relative spread of the two largest entries, as used for the symmetry check.
fn within(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Solves once per secrecy floor and writes `sweep.csv` and `trace.jsonl`.
pub fn run_sweep_secrecy(spec: &ExperimentSpec) -> Result<Vec<SecrecyPoint>, ExperimentError> {
    validate_spec(spec)?;
    if spec.rf_links.is_none() {
        return Err(ExperimentError::Usage("sweeps require --g".into()));
    }
    let base = load_scenario(spec)?;
    prepare_out_dir(&spec.out_dir)?;
    let values = if spec.sweep_values.is_empty() {
        vec![1.0, 2.0, 3.0, 4.0, 5.0]
    } else {
        spec.sweep_values.clone()
    };
    let exec = Execution::default();
    let points = par::with_workers(spec.workers, || {
        par::map(&values, exec, |&r0| {
            let mut cfg = base.clone();
            cfg.secrecy_floor = r0;
            match solve_scenario(&cfg, spec.seed, exec) {
                Ok(r) => {
                    let powers: Vec<f64> = r.eavesdroppers.iter().map(|e| e.comm_power_mw).collect();
                    let symmetric = (powers.len() == 2).then(|| within(powers[0], powers[1], 0.05));
                    SecrecyPoint {
                        secrecy_floor: r0,
                        status: "optimal".into(),
                        eavesdropper_power_mw: powers,
                        secrecy_rate: Some(r.secrecy_rate),
                        matching_error_mw2: Some(r.matching_error_mw2),
                        eavesdroppers_symmetric: symmetric,
                        trace: r.trace,
                    }
                }
                Err(e) => SecrecyPoint {
                    secrecy_floor: r0,
                    status: status_of(&e),
                    eavesdropper_power_mw: Vec::new(),
                    secrecy_rate: None,
                    matching_error_mw2: None,
                    eavesdroppers_symmetric: None,
                    trace: Vec::new(),
                },
            }
        })
    });

    for w in points.windows(2) {
        if let (Some(a), Some(b)) = (w[0].max_eavesdropper_power(), w[1].max_eavesdropper_power()) {
            if b > a * 1.05 {
                log::info!(
                    "eavesdropper-directed power rises from R_0 = {} to R_0 = {} ({a:.4e} -> {b:.4e} mW)",
                    w[0].secrecy_floor,
                    w[1].secrecy_floor
                );
            }
        }
    }

    let n_eve = base.untrusted().len();
    let mut csv = String::from("secrecy_floor,status");
    for j in base.untrusted() {
        let _ = write!(csv, ",eavesdropper_{}_power_mw", j + 1);
    }
    csv.push_str(",max_eavesdropper_power_mw,secrecy_rate,matching_error_mw2,eavesdroppers_symmetric\n");
    for p in &points {
        let _ = write!(csv, "{},{}", p.secrecy_floor, csv_field(&p.status));
        for k in 0..n_eve {
            let _ = write!(csv, ",{}", csv_opt(p.eavesdropper_power_mw.get(k).copied()));
        }
        let _ = writeln!(
            csv,
            ",{},{},{},{}",
            csv_opt(p.max_eavesdropper_power()),
            csv_opt(p.secrecy_rate),
            csv_opt(p.matching_error_mw2),
            p.eavesdroppers_symmetric.map(|b| b.to_string()).unwrap_or_default()
        );
    }
    write_file(&spec.out_dir.join("sweep.csv"), |w| w.write_all(csv.as_bytes()))?;
    write_file(&spec.out_dir.join("trace.jsonl"), |w| {
        for p in &points {
            write_trace_jsonl(&mut *w, &p.trace, Some(p.secrecy_floor), None)?;
        }
        Ok(())
    })?;
    Ok(points)
}

/// One arm of an allocation comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub arm: &'static str,
    pub total_power_dbm: f64,
    pub status: String,
    pub support: Vec<usize>,
    pub matching_error_mw2: Option<f64>,
    pub min_target_illumination_mw: Option<f64>,
    pub user_power_mw: Option<f64>,
    pub max_eavesdropper_power_mw: Option<f64>,
    pub secrecy_rate: Option<f64>,
    #[serde(skip)]
    pub report: Option<Box<DesignReport>>,
}

fn comparison_row(arm: &'static str, p_dbm: f64, r: Result<DesignReport, OptimizerError>) -> ComparisonRow {
    match r {
        Ok(r) => ComparisonRow {
            arm,
            total_power_dbm: p_dbm,
            status: "optimal".into(),
            support: r.support.clone(),
            matching_error_mw2: Some(r.matching_error_mw2),
            min_target_illumination_mw: Some(r.min_target_illumination()),
            user_power_mw: Some(r.user_power_mw),
            max_eavesdropper_power_mw: Some(r.max_eavesdropper_power()),
            secrecy_rate: Some(r.secrecy_rate),
            report: Some(Box::new(r)),
        },
        Err(e) => ComparisonRow {
            arm,
            total_power_dbm: p_dbm,
            status: status_of(&e),
            support: Vec::new(),
            matching_error_mw2: None,
            min_target_illumination_mw: None,
            user_power_mw: None,
            max_eavesdropper_power_mw: None,
            secrecy_rate: None,
            report: None,
        },
    }
}

/// Optimized allocation, contiguous baseline and full array on `cfg`.
pub fn compare_arms(cfg: &ScenarioConfig, seed: u64, exec: Execution) -> Vec<ComparisonRow> {
    let p_dbm = crate::scenario::mw_to_dbm(cfg.total_power);
    let mut full = cfg.clone();
    full.num_rf_links = cfg.num_antennas;
    let arms: [(&'static str, &ScenarioConfig, bool); 3] =
        [("aa", cfg, true), ("baseline", cfg, false), ("full_array", &full, false)];
    par::map(&arms, exec, |&(name, c, optimized)| {
        let r = if optimized {
            solve_scenario(c, seed, exec)
        } else {
            solve_baseline_report(c, seed, exec)
        };
        comparison_row(name, p_dbm, r)
    })
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut csv = String::from(
        "arm,total_power_dbm,status,support,matching_error_mw2,min_target_illumination_mw,user_power_mw,max_eavesdropper_power_mw,secrecy_rate\n",
    );
    for r in rows {
        let support: Vec<String> = r.support.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.arm,
            r.total_power_dbm,
            csv_field(&r.status),
            support.join(" "),
            csv_opt(r.matching_error_mw2),
            csv_opt(r.min_target_illumination_mw),
            csv_opt(r.user_power_mw),
            csv_opt(r.max_eavesdropper_power_mw),
            csv_opt(r.secrecy_rate)
        );
    }
    csv
}

fn write_comparison_traces(path: &Path, rows: &[ComparisonRow], tag_point: bool) -> Result<(), ExperimentError> {
    write_file(path, |w| {
        for r in rows {
            if let Some(rep) = &r.report {
                let point = tag_point.then_some(r.total_power_dbm);
                write_trace_jsonl(&mut *w, &rep.trace, point, Some(r.arm))?;
            }
        }
        Ok(())
    })
}

/// Optimized allocation against the contiguous and full-array baselines.
/// Writes `sweep.csv` (one row per arm), `report.json` and
/// `beampattern.csv` for the optimized arm, `beampattern_<arm>.csv` for the
/// baselines, and `trace.jsonl`.
pub fn run_compare_allocation(spec: &ExperimentSpec) -> Result<Vec<ComparisonRow>, ExperimentError> {
    validate_spec(spec)?;
    if spec.rf_links.is_none() {
        return Err(ExperimentError::Usage("compare-aa requires --g".into()));
    }
    let cfg = load_scenario(spec)?;
    prepare_out_dir(&spec.out_dir)?;
    let exec = Execution::default();
    let rows = par::with_workers(spec.workers, || compare_arms(&cfg, spec.seed, exec));
    let grid = AngleGrid::for_scenario(&cfg);
    write_file(&spec.out_dir.join("sweep.csv"), |w| w.write_all(comparison_csv(&rows).as_bytes()))?;
    for r in &rows {
        if let Some(rep) = &r.report {
            let name = if r.arm == "aa" {
                write_file(&spec.out_dir.join("report.json"), |w| writeln!(w, "{}", rep.to_json()))?;
                "beampattern.csv".to_string()
            } else {
                format!("beampattern_{}.csv", r.arm)
            };
            write_file(&spec.out_dir.join(name), |w| rep.write_beampattern_csv(w, &grid))?;
        }
    }
    write_comparison_traces(&spec.out_dir.join("trace.jsonl"), &rows, false)?;
    if let Some(e) = rows.iter().find(|r| r.arm == "aa" && r.report.is_none()) {
        log::warn!("optimized arm failed: {}", e.status);
    }
    Ok(rows)
}

/// Allocation comparison at every total power (dBm) in the sweep; writes
/// `sweep.csv` and `trace.jsonl`.
pub fn run_sweep_power(spec: &ExperimentSpec) -> Result<Vec<ComparisonRow>, ExperimentError> {
    validate_spec(spec)?;
    if spec.rf_links.is_none() {
        return Err(ExperimentError::Usage("sweeps require --g".into()));
    }
    let base = load_scenario(spec)?;
    prepare_out_dir(&spec.out_dir)?;
    let values = if spec.sweep_values.is_empty() {
        vec![20.0, 25.0, 30.0, 35.0]
    } else {
        spec.sweep_values.clone()
    };
    let exec = Execution::default();
    let rows: Vec<ComparisonRow> = par::with_workers(spec.workers, || {
        par::map(&values, exec, |&p| {
            let cfg = base.clone().with_total_power(dbm_to_mw(p));
            match cfg.validate() {
                Ok(()) => compare_arms(&cfg, spec.seed, exec),
                Err(e) => vec![comparison_row(
                    "aa",
                    p,
                    Err(OptimizerError::InvalidScenario(e.to_string())),
                )],
            }
        })
    })
    .into_iter()
    .flatten()
    .collect();
    write_file(&spec.out_dir.join("sweep.csv"), |w| w.write_all(comparison_csv(&rows).as_bytes()))?;
    write_comparison_traces(&spec.out_dir.join("trace.jsonl"), &rows, true)?;
    Ok(rows)
}

/// Dispatches on `spec.mode`, discarding the in-memory results.
pub fn run(spec: &ExperimentSpec) -> Result<(), ExperimentError> {
    match spec.mode {
        Mode::Solve => run_solve(spec).map(|_| ()),
        Mode::SweepSecrecy => run_sweep_secrecy(spec).map(|_| ()),
        Mode::SweepPower => run_sweep_power(spec).map(|_| ()),
        Mode::CompareAllocation => run_compare_allocation(spec).map(|_| ()),
    }
}
