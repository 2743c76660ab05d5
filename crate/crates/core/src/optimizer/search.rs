//! Grid search over the eavesdropper SINR cap `λ`.

use std::time::Instant;

use serde::Serialize;

use super::sdr::{build_sdr_p5, solve_subproblem, AllocationMode, SubproblemFailure, SubproblemSolution};
use crate::conic::{ConstraintLabel, SolveStatus, Tolerances};
use crate::metrics::AngleGrid;
use crate::par::{self, Execution};
use crate::scenario::{log_space, ChannelSet, ScenarioConfig};

/// Objective values closer than this (relative) count as ties, which are
/// broken toward the smaller `λ`.
const TIE_RELATIVE: f64 = 1e-9;

/// Candidates closer than this (relative) are the same point.
const SAME_LAMBDA: f64 = 1e-12;

fn same_lambda(a: f64, b: f64) -> bool {
    (a - b).abs() <= SAME_LAMBDA * a.abs().max(b.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    /// `f(λ)`; `+∞` when the subproblem is infeasible or failed.
    #[serde(serialize_with = "finite_or_null")]
    pub objective: f64,
    pub status: SolveStatus,
    pub refinement: bool,
    pub iterations: usize,
    /// `H(u)` of the candidate's allocation, when solved.
    pub binariness: Option<f64>,
    #[serde(skip)]
    pub wall_ms: f64,
    #[serde(skip)]
    pub dominant_constraint: Option<ConstraintLabel>,
}

pub(crate) fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone)]
pub struct LambdaSearchResult {
    /// All evaluated candidates, sorted by `λ`.
    pub candidates: Vec<LambdaCandidate>,
    /// Index of `λ*` in `candidates`.
    pub best: usize,
    pub solution: SubproblemSolution,
}

impl LambdaSearchResult {
    pub fn lambda(&self) -> f64 {
        self.candidates[self.best].lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllInfeasible {
    /// Failure of the largest-`λ` candidate.
    pub most_relaxed: SubproblemFailure,
    pub candidates: Vec<LambdaCandidate>,
}

/// Index of the smallest finite value, ties (within a relative `1e-9`)
/// resolved toward the smaller `λ`. `values` must be sorted by `λ`.
pub fn argmin_lambda(values: &[f64]) -> Option<usize> {
    let min = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let tol = TIE_RELATIVE * (1.0 + min.abs());
    values.iter().position(|&v| v.is_finite() && v <= min + tol)
}

type Evaluated = (LambdaCandidate, Result<SubproblemSolution, SubproblemFailure>);

fn evaluate(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    mode: &AllocationMode,
    lambdas: &[f64],
    refinement: bool,
    tol: &Tolerances,
    exec: Execution,
) -> Vec<Evaluated> {
    par::map(lambdas, exec, |&lambda| {
        let start = Instant::now();
        let problem = build_sdr_p5(cfg, channels, grid, lambda, mode);
        let result = solve_subproblem(&problem, tol);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let cand = match &result {
            Ok(s) => LambdaCandidate {
                lambda,
                objective: s.objective,
                status: SolveStatus::Optimal,
                refinement,
                iterations: s.stats.iterations,
                binariness: Some(super::pscp::binariness(&s.allocation)),
                wall_ms,
                dominant_constraint: None,
            },
            Err(f) => {
                if f.status == SolveStatus::NumericalFailure {
                    log::warn!("numerical failure at lambda = {lambda:e}: {}", f.detail);
                }
                LambdaCandidate {
                    lambda,
                    objective: f64::INFINITY,
                    status: f.status,
                    refinement,
                    iterations: 0,
                    binariness: None,
                    wall_ms,
                    dominant_constraint: f.dominant_constraint.clone(),
                }
            }
        };
        (cand, result)
    })
}

/// Solves the subproblem at every `λ` in `lambdas` (deduplicated), then,
/// when `refine` is set, at 11 log-spaced points spanning the neighbors of
/// the coarse argmin, and returns the overall argmin.
#[allow(clippy::too_many_arguments)]
pub fn lambda_search(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    mode: &AllocationMode,
    lambdas: &[f64],
    refine: bool,
    tol: &Tolerances,
    exec: Execution,
) -> Result<LambdaSearchResult, AllInfeasible> {
    let mut coarse: Vec<f64> = lambdas.iter().copied().filter(|l| *l > 0.0 && l.is_finite()).collect();
    coarse.sort_by(f64::total_cmp);
    coarse.dedup_by(|a, b| same_lambda(*a, *b));
    let mut all = evaluate(cfg, channels, grid, mode, &coarse, false, tol, exec);

    let values: Vec<f64> = all.iter().map(|(c, _)| c.objective).collect();
    if refine {
        if let Some(i) = argmin_lambda(&values) {
            let lo = coarse[i.saturating_sub(1)];
            let hi = coarse[(i + 1).min(coarse.len() - 1)];
            if lo < hi {
                let fine: Vec<f64> = log_space(lo, hi, 11)
                    .into_iter()
                    .filter(|l| *l > lo && *l < hi && !coarse.iter().any(|c| same_lambda(*c, *l)))
                    .collect();
                all.extend(evaluate(cfg, channels, grid, mode, &fine, true, tol, exec));
                all.sort_by(|a, b| a.0.lambda.total_cmp(&b.0.lambda));
            }
        }
    }

    let values: Vec<f64> = all.iter().map(|(c, _)| c.objective).collect();
    let candidates: Vec<LambdaCandidate> = all.iter().map(|(c, _)| c.clone()).collect();
    match argmin_lambda(&values) {
        Some(best) => {
            let solution = all.swap_remove(best).1.expect("finite objective implies a solution");
            Ok(LambdaSearchResult {
                candidates,
                best,
                solution,
            })
        }
        None => {
            let most_relaxed = all
                .pop()
                .and_then(|(_, r)| r.err())
                .unwrap_or(SubproblemFailure {
                    lambda: f64::NAN,
                    status: SolveStatus::Infeasible,
                    dominant_constraint: None,
                    detail: "empty lambda grid".into(),
                });
            Err(AllInfeasible {
                most_relaxed,
                candidates,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_prefers_smaller_lambda_on_ties() {
        assert_eq!(argmin_lambda(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin_lambda(&[f64::INFINITY, 2.0, 1.0 + 1e-12, 1.0]), Some(2));
        assert_eq!(argmin_lambda(&[f64::INFINITY, f64::INFINITY, 5.0]), Some(2));
        assert_eq!(argmin_lambda(&[f64::INFINITY]), None);
        assert_eq!(argmin_lambda(&[]), None);
    }

    #[test]
    fn round_off_copies_are_one_candidate() {
        let x = 10f64.powf(-1.5);
        assert!(same_lambda(x, 0.031622776601683794));
        assert!(!same_lambda(x, x * (1.0 + 1e-9)));
    }
}
