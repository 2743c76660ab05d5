//! Serializable summary of a finished design.

use std::io::Write;

use serde::Serialize;

use crate::linalg::{self, CMatrix, CVector};
use crate::metrics::{
    self, beampattern, matching_error_samples, monte_carlo_radiated_power, secrecy_rate_from_sinr, sinr_target,
    sinr_user, AngleGrid, BeamformingDesign, MonteCarloCheck,
};
use crate::optimizer::{
    binariness, LambdaCandidate, OptimizationOutcome, PolishedDesign, PscpIteration, StopReason, TraceRecord,
};
use crate::par::Execution;
use crate::scenario::{mw_to_dbm, steering_vector, ChannelSet, ScenarioConfig};

/// Number of symbol draws for the Monte-Carlo power check.
pub const MONTE_CARLO_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct TargetIllumination {
    pub index: usize,
    pub angle_deg: f64,
    pub untrusted: bool,
    pub illumination_mw: f64,
    pub sinr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EavesdropperExposure {
    pub index: usize,
    pub angle_deg: f64,
    /// `g^H W_c g`
    pub comm_power_mw: f64,
    pub sinr: f64,
    /// `log2(1 + SINR_u) − log2(1 + SINR_j)`
    pub secrecy_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BeamSample {
    pub angle_deg: f64,
    pub desired: f64,
    pub radiated_mw: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    fn from(m: &CMatrix) -> Self {
        let rows = |f: fn(&crate::linalg::C64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

fn complex_vec(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationSearch {
    pub stop: Option<StopReason>,
    pub relaxed_allocation: Vec<f64>,
    pub relaxed_binariness: f64,
    pub relaxed_matching_error_mw2: f64,
    pub iterations: Vec<PscpIteration>,
}

/// Final design with every reported quantity. Wall-clock timing is kept
/// out of the serialized form so identical inputs give identical JSON.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub num_antennas: usize,
    pub num_rf_links: usize,
    pub total_power_mw: f64,
    pub total_power_dbm: f64,
    pub secrecy_floor: f64,
    pub lambda_star: f64,
    pub beta: f64,
    pub support: Vec<usize>,
    pub allocation: Vec<f64>,
    pub matching_error_mw2: f64,
    pub mu_mw: f64,
    pub secrecy_rate: f64,
    pub sinr_user: f64,
    pub user_power_mw: f64,
    pub target_illumination: Vec<TargetIllumination>,
    pub eavesdroppers: Vec<EavesdropperExposure>,
    pub total_trace_mw: f64,
    pub max_antenna_power_mw: f64,
    pub sensing_beam_count: usize,
    pub invariant_violations: Vec<String>,
    pub allocation_search: Option<AllocationSearch>,
    pub lambda_candidates: Vec<LambdaCandidate>,
    pub monte_carlo: Vec<MonteCarloCheck>,
    pub comm_beam: Vec<[f64; 2]>,
    pub sensing_beams: Vec<Vec<[f64; 2]>>,
    pub comm_covariance: ComplexMatrix,
    pub sensing_covariance: ComplexMatrix,
    pub beampattern: Vec<BeamSample>,
    #[serde(skip)]
    pub design: BeamformingDesign,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl DesignReport {
    pub fn from_polished(
        cfg: &ScenarioConfig,
        channels: &ChannelSet,
        grid: &AngleGrid,
        polished: &PolishedDesign,
        monte_carlo_seed: Option<u64>,
        exec: Execution,
    ) -> Self {
        let d = &polished.design;
        let total = d.total();
        let radiated = beampattern(&total, grid, cfg.spacing_ratio, exec);
        let untrusted = cfg.untrusted();
        let su = sinr_user(&d.comm, &d.sensing, &channels.user, cfg.noise_user);
        let target_illumination = cfg
            .target_angles
            .iter()
            .enumerate()
            .map(|(j, &angle)| {
                let a = steering_vector(angle, cfg.num_antennas, cfg.spacing_ratio);
                TargetIllumination {
                    index: j + 1,
                    angle_deg: angle,
                    untrusted: untrusted.contains(&j),
                    illumination_mw: linalg::quad_form(&total, &a).max(0.0),
                    sinr: sinr_target(&d.comm, &d.sensing, &channels.targets[j], cfg.noise_targets[j]),
                }
            })
            .collect();
        let eavesdroppers: Vec<EavesdropperExposure> = untrusted
            .iter()
            .map(|&j| {
                let sj = sinr_target(&d.comm, &d.sensing, &channels.targets[j], cfg.noise_targets[j]);
                EavesdropperExposure {
                    index: j + 1,
                    angle_deg: cfg.target_angles[j],
                    comm_power_mw: linalg::quad_form(&d.comm, &channels.targets[j]).max(0.0),
                    sinr: sj,
                    secrecy_rate: secrecy_rate_from_sinr(su, &[sj]),
                }
            })
            .collect();
        let eave_sinrs: Vec<f64> = eavesdroppers.iter().map(|e| e.sinr).collect();
        let mut directions = vec![cfg.user_angle];
        directions.extend(&cfg.target_angles);
        let monte_carlo = match monte_carlo_seed {
            Some(seed) => monte_carlo_radiated_power(
                &d.comm,
                &d.sensing,
                &directions,
                cfg.spacing_ratio,
                MONTE_CARLO_DRAWS,
                seed,
                exec,
            ),
            None => Vec::new(),
        };
        Self {
            num_antennas: cfg.num_antennas,
            num_rf_links: cfg.num_rf_links,
            total_power_mw: cfg.total_power,
            total_power_dbm: mw_to_dbm(cfg.total_power),
            secrecy_floor: cfg.secrecy_floor,
            lambda_star: polished.lambda,
            beta: polished.beta,
            support: polished.support.iter().map(|i| i + 1).collect(),
            allocation: d.allocation.clone(),
            matching_error_mw2: matching_error_samples(&radiated, &grid.desired, d.mu),
            mu_mw: d.mu,
            secrecy_rate: secrecy_rate_from_sinr(su, &eave_sinrs),
            sinr_user: su,
            user_power_mw: linalg::quad_form(&d.comm, &channels.user).max(0.0),
            target_illumination,
            eavesdroppers,
            total_trace_mw: linalg::trace_re(&total),
            max_antenna_power_mw: total.diagonal().iter().map(|z| z.re).fold(0.0, f64::max),
            sensing_beam_count: d.sensing_beams.len(),
            invariant_violations: d.invariant_violations(cfg.total_power, cfg.per_antenna_cap),
            allocation_search: None,
            lambda_candidates: polished.search.candidates.clone(),
            monte_carlo,
            comm_beam: d.comm_beam.as_ref().map(complex_vec).unwrap_or_default(),
            sensing_beams: d.sensing_beams.iter().map(complex_vec).collect(),
            comm_covariance: ComplexMatrix::from(&d.comm),
            sensing_covariance: ComplexMatrix::from(&d.sensing),
            beampattern: grid
                .angles
                .iter()
                .zip(&grid.desired)
                .zip(&radiated)
                .map(|((&angle_deg, &desired), &radiated_mw)| BeamSample {
                    angle_deg,
                    desired,
                    radiated_mw,
                })
                .collect(),
            design: d.clone(),
            trace: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn from_outcome(
        cfg: &ScenarioConfig,
        channels: &ChannelSet,
        grid: &AngleGrid,
        outcome: &OptimizationOutcome,
        monte_carlo_seed: Option<u64>,
        exec: Execution,
    ) -> Self {
        let mut r = Self::from_polished(cfg, channels, grid, &outcome.polished, monte_carlo_seed, exec);
        let p2 = cfg.total_power * cfg.total_power;
        r.allocation_search = Some(AllocationSearch {
            stop: outcome.pscp.stop,
            relaxed_allocation: outcome.pscp.allocation.clone(),
            relaxed_binariness: binariness(&outcome.pscp.allocation),
            relaxed_matching_error_mw2: outcome.relaxed.matching_error * p2,
            iterations: outcome.pscp.iterations.clone(),
        });
        r.trace = outcome.trace.clone();
        r
    }

    pub fn radiated(&self) -> Vec<f64> {
        self.beampattern.iter().map(|s| s.radiated_mw).collect()
    }

    pub fn min_target_illumination(&self) -> f64 {
        self.target_illumination
            .iter()
            .map(|t| t.illumination_mw)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eavesdropper_power(&self) -> f64 {
        self.eavesdroppers.iter().map(|e| e.comm_power_mw).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn write_beampattern_csv<W: Write>(&self, out: W, grid: &AngleGrid) -> std::io::Result<()> {
        metrics::write_beampattern_csv(out, grid, &self.radiated())
    }
}

/// Writes one JSON object per trace record. `point` and `arm` tag records of
/// sweeps and comparisons.
pub fn write_trace_jsonl<W: Write>(
    mut out: W,
    records: &[TraceRecord],
    point: Option<f64>,
    arm: Option<&str>,
) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        #[serde(skip_serializing_if = "Option::is_none")]
        point: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        arm: Option<&'a str>,
        #[serde(flatten)]
        record: &'a TraceRecord,
    }
    for record in records {
        let line = serde_json::to_string(&Line { point, arm, record }).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}
