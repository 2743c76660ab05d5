//! The alternating outer loop: penalized SCP over the allocation with a full
//! `λ` search per iteration, followed by rounding and a binary re-solve.

use serde::Serialize;
use thiserror::Error;

use super::pscp::binariness;
use super::reconstruct::{extract_sensing_beams, rank_one_reconstruct, ReconstructError};
use super::sdr::{AllocationMode, SubproblemSolution};
use super::search::{lambda_search, AllInfeasible, LambdaCandidate, LambdaSearchResult};
use crate::conic::{SolveStatus, Tolerances};
use crate::metrics::{AngleGrid, BeamformingDesign};
use crate::par::Execution;
use crate::report::DesignReport;
use crate::scenario::{build_channels, ChannelSet, ScenarioConfig};

/// Relative eigenvalue threshold for splitting `S` into beams.
pub const BEAM_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub tolerances: Tolerances,
    pub max_outer: usize,
    pub execution: Execution,
    /// Add a refinement pass around the coarse `λ` argmin.
    pub refine: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            max_outer: 30,
            execution: Execution::default(),
            refine: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{stage}: every lambda candidate failed; largest lambda = {lambda:e} ended {status:?}{}", constraint_note(.constraint))]
    Infeasible {
        stage: &'static str,
        lambda: f64,
        status: SolveStatus,
        constraint: Option<String>,
    },
    #[error("rounded support {support:?} admits no feasible beamformer (fractional allocation {allocation:?}){}", constraint_note(.constraint))]
    PolishInfeasible {
        support: Vec<usize>,
        allocation: Vec<f64>,
        status: SolveStatus,
        constraint: Option<String>,
    },
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
}

fn constraint_note(c: &Option<String>) -> String {
    match c {
        Some(c) => format!("; tightest constraint: {c}"),
        None => String::new(),
    }
}

impl OptimizerError {
    /// True for failures caused by numerics rather than by the problem data.
    pub fn is_numerical(&self) -> bool {
        match self {
            OptimizerError::Infeasible { status, .. } | OptimizerError::PolishInfeasible { status, .. } => {
                *status == SolveStatus::NumericalFailure
            }
            OptimizerError::Reconstruct(_) => true,
            OptimizerError::InvalidScenario(_) => false,
        }
    }

    fn from_search(stage: &'static str, e: AllInfeasible) -> Self {
        OptimizerError::Infeasible {
            stage,
            lambda: e.most_relaxed.lambda,
            status: e.most_relaxed.status,
            constraint: e.most_relaxed.dominant_constraint.map(|c| c.to_string()),
        }
    }
}

/// One `(outer iteration, λ candidate)` record of the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: &'static str,
    pub outer: usize,
    pub eta: f64,
    #[serde(flatten)]
    pub candidate: LambdaCandidate,
    pub selected: bool,
    pub wall_ms: f64,
}

fn trace_records(stage: &'static str, outer: usize, eta: f64, search: &LambdaSearchResult) -> Vec<TraceRecord> {
    search
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| TraceRecord {
            stage,
            outer,
            eta,
            candidate: c.clone(),
            selected: i == search.best,
            wall_ms: c.wall_ms,
        })
        .collect()
}

/// Summary of one P-SCP iteration. `penalized_prev` and `penalized` are
/// `t + η_k H(u)` at the previous and the new iterate under this iteration's
/// penalty weight; the majorization argument gives `penalized ≤
/// penalized_prev` up to solver accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PscpIteration {
    pub k: usize,
    pub eta: f64,
    pub lambda: f64,
    pub surrogate: f64,
    pub matching_error: f64,
    pub binariness: f64,
    pub penalized_prev: f64,
    pub penalized: f64,
    pub allocation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ObjectiveStalled,
    Binary,
    IterationLimit,
}

/// Running state of the penalized SCP loop.
#[derive(Debug, Clone, Serialize)]
pub struct PscpState {
    pub k: usize,
    pub allocation: Vec<f64>,
    pub eta: f64,
    pub lambda: f64,
    pub iterations: Vec<PscpIteration>,
    pub stop: Option<StopReason>,
}

impl PscpState {
    pub fn binariness(&self) -> f64 {
        binariness(&self.allocation)
    }

    pub fn penalized_history(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.penalized).collect()
    }

    /// Largest increase `penalized − penalized_prev` over all iterations.
    pub fn worst_majorization_step(&self) -> f64 {
        self.iterations
            .iter()
            .map(|i| i.penalized - i.penalized_prev)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

const ETA_CAP: f64 = 1e8;

/// Runs the penalized SCP loop from the uniform allocation `G/M`.
pub fn run_pscp(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    options: &OptimizerOptions,
    trace: &mut Vec<TraceRecord>,
) -> Result<(PscpState, SubproblemSolution), OptimizerError> {
    let m = cfg.num_antennas;
    let g = cfg.num_rf_links as f64;
    let base_grid = cfg.lambda_grid.candidates();
    let mut state = PscpState {
        k: 0,
        allocation: vec![g / m as f64; m],
        eta: 0.0,
        lambda: f64::NAN,
        iterations: Vec::new(),
        stop: None,
    };
    let mut prev: Option<SubproblemSolution> = None;
    let mut eta_next = 0.0;
    loop {
        let k = state.k + 1;
        let eta = eta_next;
        let mut lambdas = base_grid.clone();
        if state.lambda.is_finite() {
            lambdas.push(state.lambda);
        }
        let mode = AllocationMode::Relaxed {
            u_prev: state.allocation.clone(),
            eta,
        };
        let search = lambda_search(
            cfg,
            channels,
            grid,
            &mode,
            &lambdas,
            options.refine,
            &options.tolerances,
            options.execution,
        )
        .map_err(|e| OptimizerError::from_search("allocation search", e))?;
        trace.extend(trace_records("pscp", k, eta, &search));
        let sol = search.solution;
        let h_new = binariness(&sol.allocation);
        let h_old = state.binariness();
        let penalized = sol.matching_error + eta * h_new;
        let penalized_prev = match &prev {
            Some(p) => p.matching_error + eta * h_old,
            None => f64::INFINITY,
        };
        log::info!(
            "P-SCP {k}: eta = {eta:.3e}, lambda = {:.3e}, K = {:.6e}, H(u) = {h_new:.3e}",
            sol.lambda,
            sol.matching_error
        );
        state.iterations.push(PscpIteration {
            k,
            eta,
            lambda: sol.lambda,
            surrogate: sol.objective,
            matching_error: sol.matching_error,
            binariness: h_new,
            penalized_prev,
            penalized,
            allocation: sol.allocation.clone(),
        });
        state.k = k;
        state.allocation = sol.allocation.clone();
        state.lambda = sol.lambda;
        state.eta = eta;

        eta_next = if k == 1 {
            cfg.penalty.unwrap_or(10.0 * sol.matching_error.max(1e-12))
        } else if h_new > h_old / 10.0 {
            (eta * 10.0).min(ETA_CAP)
        } else {
            eta
        };

        let stalled = k > 1 && eta_next == eta && (penalized - penalized_prev).abs() <= 1e-5 * (1.0 + penalized.abs());
        let stop = if h_new <= 1e-6 * m as f64 {
            Some(StopReason::Binary)
        } else if stalled {
            Some(StopReason::ObjectiveStalled)
        } else if k >= options.max_outer {
            Some(StopReason::IterationLimit)
        } else {
            None
        };
        prev = Some(sol);
        if let Some(reason) = stop {
            state.stop = Some(reason);
            return Ok((state, prev.expect("just set")));
        }
    }
}

/// Indices of the `g` largest entries of `u` (ties to the lower index),
/// returned in ascending order.
pub fn top_g_support(u: &[f64], g: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    let mut s: Vec<usize> = idx.into_iter().take(g).collect();
    s.sort_unstable();
    s
}

/// Result of a binary-support solve with reconstruction applied.
#[derive(Debug, Clone)]
pub struct PolishedDesign {
    pub design: BeamformingDesign,
    pub support: Vec<usize>,
    pub lambda: f64,
    pub beta: f64,
    /// Normalized matching error `t` of the binary subproblem.
    pub objective: f64,
    pub search: LambdaSearchResult,
}

fn finish_fixed(search: LambdaSearchResult, support: Vec<usize>, channels: &ChannelSet) -> Result<PolishedDesign, OptimizerError> {
    let sol = &search.solution;
    let rec = rank_one_reconstruct(&sol.comm, &sol.sensing, &channels.user)?;
    let sensing_beams = extract_sensing_beams(&rec.sensing, BEAM_THRESHOLD);
    let design = BeamformingDesign {
        comm: rec.comm,
        sensing: rec.sensing,
        mu: sol.mu,
        allocation: sol.allocation.clone(),
        comm_beam: Some(rec.beam),
        sensing_beams,
    };
    Ok(PolishedDesign {
        design,
        support,
        lambda: sol.lambda,
        beta: sol.beta,
        objective: sol.matching_error,
        search,
    })
}

/// Solves the subproblem on a fixed binary support over `lambdas` and
/// reconstructs the rank-one communication beam.
pub fn solve_fixed_support(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    support: &[usize],
    lambdas: &[f64],
    options: &OptimizerOptions,
) -> Result<(PolishedDesign, Vec<TraceRecord>), AllInfeasible> {
    let mode = AllocationMode::Fixed {
        support: support.to_vec(),
    };
    let search = lambda_search(
        cfg,
        channels,
        grid,
        &mode,
        lambdas,
        options.refine,
        &options.tolerances,
        options.execution,
    )?;
    let trace = trace_records("fixed", 0, 0.0, &search);
    let polished = finish_fixed(search, support.to_vec(), channels).map_err(|e| AllInfeasible {
        most_relaxed: super::sdr::SubproblemFailure {
            lambda: f64::NAN,
            status: SolveStatus::NumericalFailure,
            dominant_constraint: None,
            detail: e.to_string(),
        },
        candidates: Vec::new(),
    })?;
    Ok((polished, trace))
}

/// Rounds `u_frac` to its top-`G` support and re-solves with `u` fixed and
/// no penalty, searching `λ` over the configured grid plus `lambda_star`.
pub fn round_and_polish(
    u_frac: &[f64],
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    lambda_star: f64,
    options: &OptimizerOptions,
) -> Result<(PolishedDesign, Vec<TraceRecord>), OptimizerError> {
    let support = top_g_support(u_frac, cfg.num_rf_links);
    let mut lambdas = cfg.lambda_grid.candidates();
    if lambda_star.is_finite() && lambda_star > 0.0 {
        lambdas.push(lambda_star);
    }
    let mode = AllocationMode::Fixed {
        support: support.clone(),
    };
    let search = lambda_search(
        cfg,
        channels,
        grid,
        &mode,
        &lambdas,
        options.refine,
        &options.tolerances,
        options.execution,
    )
    .map_err(|e| OptimizerError::PolishInfeasible {
        support: support.iter().map(|i| i + 1).collect(),
        allocation: u_frac.to_vec(),
        status: e.most_relaxed.status,
        constraint: e.most_relaxed.dominant_constraint.map(|c| c.to_string()),
    })?;
    let trace = trace_records("polish", 0, 0.0, &search);
    Ok((finish_fixed(search, support, channels)?, trace))
}

/// Everything produced by one optimization run.
#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub polished: PolishedDesign,
    pub pscp: PscpState,
    pub relaxed: SubproblemSolution,
    pub trace: Vec<TraceRecord>,
}

/// Penalized SCP followed by rounding and polishing.
pub fn optimize_allocation(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    options: &OptimizerOptions,
) -> Result<OptimizationOutcome, OptimizerError> {
    cfg.validate_allow_full_array()
        .map_err(|e| OptimizerError::InvalidScenario(e.to_string()))?;
    let mut trace = Vec::new();
    let (pscp, relaxed) = run_pscp(cfg, channels, grid, options, &mut trace)?;
    let (polished, polish_trace) = round_and_polish(&pscp.allocation, cfg, channels, grid, pscp.lambda, options)?;
    trace.extend(polish_trace.into_iter().map(|mut r| {
        r.outer = pscp.k + 1;
        r
    }));
    Ok(OptimizationOutcome {
        polished,
        pscp,
        relaxed,
        trace,
    })
}

/// The contiguous-support baseline `{1..G}` solved on the same path.
pub fn solve_baseline(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    options: &OptimizerOptions,
) -> Result<(PolishedDesign, Vec<TraceRecord>), OptimizerError> {
    cfg.validate_allow_full_array()
        .map_err(|e| OptimizerError::InvalidScenario(e.to_string()))?;
    let support: Vec<usize> = (0..cfg.num_rf_links).collect();
    solve_fixed_support(cfg, channels, grid, &support, &cfg.lambda_grid.candidates(), options)
        .map_err(|e| OptimizerError::from_search("baseline", e))
}

/// Full pipeline on `cfg`: channels, grid, allocation search, polish and
/// report (with a Monte-Carlo power check seeded by 0).
pub fn alternating_optimize(cfg: &ScenarioConfig, options: &OptimizerOptions) -> Result<DesignReport, OptimizerError> {
    let start = std::time::Instant::now();
    let channels = build_channels(cfg);
    let grid = AngleGrid::for_scenario(cfg);
    let outcome = optimize_allocation(cfg, &channels, &grid, options)?;
    let mut report = DesignReport::from_outcome(cfg, &channels, &grid, &outcome, Some(0), options.execution);
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_g_examples() {
        assert_eq!(top_g_support(&[0.99, 0.98, 0.01, 0.02], 2), vec![0, 1]);
        assert_eq!(top_g_support(&[0.75; 16], 12), (0..12).collect::<Vec<_>>());
        assert_eq!(top_g_support(&[0.1, 0.9, 0.5, 0.9], 2), vec![1, 3]);
    }
}
