//! Scenario descriptions, steering vectors and line-of-sight channels.
//!
//! Scenario files are flat TOML documents. Angles are in degrees; every power
//! or noise variance is given either in dBm (`<name>_dbm`) or in linear
//! milliwatts (`<name>_mw`). Internally all powers are linear milliwatts.
//!
//! ```toml
//! num_antennas = 16
//! num_rf_links = 12
//! target_angles = [-60.0, 60.0, -40.0, 40.0, -20.0, 20.0]
//! untrusted_indices = [1, 2]
//! user_angle = 0.0
//! total_power_dbm = 30.0
//! noise_user_dbm = -60.0
//! noise_targets_dbm = -60.0
//! secrecy_floor = 5.0
//! beam_halfwidth = 5.0
//! ```

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CVector, C64};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Bounds and point count of the logarithmic grid searched for the
/// eavesdropper SINR cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LambdaGridSpec {
    fn default() -> Self {
        Self {
            min: 1e-3,
            max: 1e3,
            points: 25,
        }
    }
}

impl LambdaGridSpec {
    /// Log-spaced candidates, inclusive of both bounds.
    pub fn candidates(&self) -> Vec<f64> {
        log_space(self.min, self.max, self.points)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.min > 0.0 && self.max >= self.min && self.min.is_finite() && self.max.is_finite())
        {
            return Err(ScenarioError::Invalid(
                "lambda grid bounds must satisfy 0 < min <= max".into(),
            ));
        }
        if self.points == 0 || (self.points == 1 && self.max != self.min) {
            return Err(ScenarioError::Invalid(
                "lambda grid needs at least one point (two when min < max)".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// A fully resolved scenario. Powers are linear milliwatts, angles degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_antennas: usize,
    pub num_rf_links: usize,
    pub spacing_ratio: f64,
    pub target_angles: Vec<f64>,
    /// 1-based target indices of suspected eavesdroppers.
    pub untrusted_indices: Vec<usize>,
    pub user_angle: f64,
    pub user_gain: C64,
    pub path_gains: Vec<C64>,
    pub total_power: f64,
    pub per_antenna_cap: f64,
    pub noise_user: f64,
    pub noise_targets: Vec<f64>,
    /// Minimum secrecy rate, bits/s/Hz.
    pub secrecy_floor: f64,
    pub beam_halfwidth: f64,
    pub grid_size: usize,
    /// Initial binary-penalty weight. `None` selects it from the objective
    /// scale after the first outer iteration.
    pub penalty: Option<f64>,
    pub lambda_grid: LambdaGridSpec,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

impl ScenarioConfig {
    /// Standard setup: 16-element half-wavelength
    /// ULA, six targets at ±60°, ±40°, ±20° with the ±60° pair untrusted, the
    /// user at broadside, -60 dBm noise, ε = 5°, R0 = 5 bps/Hz, 30 dBm budget.
    pub fn standard(num_rf_links: usize) -> Self {
        let targets = vec![-60.0, 60.0, -40.0, 40.0, -20.0, 20.0];
        let n = targets.len();
        Self {
            num_antennas: 16,
            num_rf_links,
            spacing_ratio: 0.5,
            target_angles: targets,
            untrusted_indices: vec![1, 2],
            user_angle: 0.0,
            user_gain: Complex::new(1.0, 0.0),
            path_gains: vec![Complex::new(1.0, 0.0); n],
            total_power: dbm_to_mw(30.0),
            per_antenna_cap: dbm_to_mw(30.0),
            noise_user: dbm_to_mw(-60.0),
            noise_targets: vec![dbm_to_mw(-60.0); n],
            secrecy_floor: 5.0,
            beam_halfwidth: 5.0,
            grid_size: 181,
            penalty: None,
            lambda_grid: LambdaGridSpec::default(),
        }
    }

    pub fn num_targets(&self) -> usize {
        self.target_angles.len()
    }

    /// 0-based indices of the untrusted targets.
    pub fn untrusted(&self) -> Vec<usize> {
        self.untrusted_indices.iter().map(|&j| j - 1).collect()
    }

    /// Sets the total budget, keeping the per-antenna cap equal to it when it
    /// was tied to the budget before.
    pub fn with_total_power(mut self, p_mw: f64) -> Self {
        let tied = (self.per_antenna_cap - self.total_power).abs() <= 1e-12 * self.total_power;
        self.total_power = p_mw;
        if tied {
            self.per_antenna_cap = p_mw;
        }
        self
    }

    /// Checks every invariant, including `G < M`.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.validate_links(false)
    }

    /// Like [`validate`](Self::validate) but accepts `G == M`, which the
    /// full-array baseline uses.
    pub fn validate_allow_full_array(&self) -> Result<(), ScenarioError> {
        self.validate_links(true)
    }

    fn validate_links(&self, allow_full: bool) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Invalid(msg));
        let (m, g) = (self.num_antennas, self.num_rf_links);
        if m < 2 {
            return bad("num_antennas must be at least 2".into());
        }
        if g < 1 {
            return bad("num_rf_links must be at least 1".into());
        }
        if g > m || (g == m && !allow_full) {
            return bad(format!("G < M required (got G = {g}, M = {m})"));
        }
        if !(self.spacing_ratio > 0.0 && self.spacing_ratio.is_finite()) {
            return bad("spacing_ratio must be positive".into());
        }
        let t = self.num_targets();
        if t == 0 {
            return bad("at least one target angle is required".into());
        }
        for &a in self.target_angles.iter().chain(std::iter::once(&self.user_angle)) {
            if !(-90.0..=90.0).contains(&a) {
                return bad(format!("angle {a} outside [-90, 90] degrees"));
            }
        }
        if self.untrusted_indices.is_empty() {
            return bad("untrusted_indices must be nonempty".into());
        }
        let mut seen = vec![false; t];
        for &j in &self.untrusted_indices {
            if j == 0 || j > t {
                return bad(format!("untrusted index {j} outside 1..={t}"));
            }
            if seen[j - 1] {
                return bad(format!("untrusted index {j} repeated"));
            }
            seen[j - 1] = true;
        }
        if self.path_gains.len() != t {
            return bad(format!("expected {t} path gains, got {}", self.path_gains.len()));
        }
        if self.noise_targets.len() != t {
            return bad(format!(
                "expected {t} target noise powers, got {}",
                self.noise_targets.len()
            ));
        }
        let positive = |name: &str, v: f64| -> Result<(), ScenarioError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::Invalid(format!("{name} must be strictly positive")))
            }
        };
        positive("total_power", self.total_power)?;
        positive("per_antenna_cap", self.per_antenna_cap)?;
        positive("noise_user", self.noise_user)?;
        for &n in &self.noise_targets {
            positive("noise_targets", n)?;
        }
        positive("beam_halfwidth", self.beam_halfwidth)?;
        if !(self.secrecy_floor >= 0.0 && self.secrecy_floor.is_finite()) {
            return bad("secrecy_floor must be nonnegative".into());
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2".into());
        }
        if let Some(eta) = self.penalty {
            if !(eta >= 0.0 && eta.is_finite()) {
                return bad("penalty must be nonnegative".into());
            }
        }
        if self.per_antenna_cap * (g as f64) < self.total_power * (1.0 - 1e-12) {
            return bad("P_b * G >= P_all required".into());
        }
        self.lambda_grid.validate()
    }

    /// Canonical flat TOML with linear-milliwatt keys.
    pub fn to_toml(&self) -> String {
        let raw = RawScenario {
            num_antennas: Some(self.num_antennas),
            num_rf_links: Some(self.num_rf_links),
            spacing_ratio: Some(self.spacing_ratio),
            target_angles: Some(self.target_angles.clone()),
            untrusted_indices: Some(self.untrusted_indices.clone()),
            user_angle: Some(self.user_angle),
            user_gain: Some([self.user_gain.re, self.user_gain.im]),
            path_gains: Some(self.path_gains.iter().map(|z| [z.re, z.im]).collect()),
            total_power_mw: Some(self.total_power),
            per_antenna_cap_mw: Some(self.per_antenna_cap),
            noise_user_mw: Some(self.noise_user),
            noise_targets_mw: Some(NoiseSpec::PerTarget(self.noise_targets.clone())),
            secrecy_floor: Some(self.secrecy_floor),
            beam_halfwidth: Some(self.beam_halfwidth),
            grid_size: Some(self.grid_size),
            penalty: self.penalty,
            lambda_min: Some(self.lambda_grid.min),
            lambda_max: Some(self.lambda_grid.max),
            lambda_points: Some(self.lambda_grid.points),
            ..RawScenario::default()
        };
        toml::to_string(&raw).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NoiseSpec {
    Shared(f64),
    PerTarget(Vec<f64>),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    num_antennas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_rf_links: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spacing_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_angles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    untrusted_indices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    user_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    user_gain: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path_gains: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_power_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_power_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_antenna_cap_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_antenna_cap_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_user_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_user_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_targets_dbm: Option<NoiseSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_targets_mw: Option<NoiseSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    secrecy_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beam_halfwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_points: Option<usize>,
}

fn required<T>(v: Option<T>, key: &str) -> Result<T, ScenarioError> {
    v.ok_or_else(|| ScenarioError::Invalid(format!("missing required key `{key}`")))
}

fn power_key(dbm: Option<f64>, mw: Option<f64>, key: &str) -> Result<Option<f64>, ScenarioError> {
    match (dbm, mw) {
        (Some(_), Some(_)) => Err(ScenarioError::Invalid(format!(
            "give either `{key}_dbm` or `{key}_mw`, not both"
        ))),
        (Some(d), None) => Ok(Some(dbm_to_mw(d))),
        (None, Some(m)) => Ok(Some(m)),
        (None, None) => Ok(None),
    }
}

fn noise_key(
    dbm: Option<NoiseSpec>,
    mw: Option<NoiseSpec>,
    targets: usize,
) -> Result<Option<Vec<f64>>, ScenarioError> {
    let expand = |spec: NoiseSpec, conv: fn(f64) -> f64| match spec {
        NoiseSpec::Shared(v) => vec![conv(v); targets],
        NoiseSpec::PerTarget(vs) => vs.into_iter().map(conv).collect(),
    };
    match (dbm, mw) {
        (Some(_), Some(_)) => Err(ScenarioError::Invalid(
            "give either `noise_targets_dbm` or `noise_targets_mw`, not both".into(),
        )),
        (Some(d), None) => Ok(Some(expand(d, dbm_to_mw))),
        (None, Some(m)) => Ok(Some(expand(m, |v| v))),
        (None, None) => Ok(None),
    }
}

/// Parses and validates a scenario document, converting dBm fields to
/// milliwatts and filling defaults.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let target_angles = required(raw.target_angles, "target_angles")?;
    let t = target_angles.len();
    let total_power = required(
        power_key(raw.total_power_dbm, raw.total_power_mw, "total_power")?,
        "total_power_dbm",
    )?;
    let per_antenna_cap =
        power_key(raw.per_antenna_cap_dbm, raw.per_antenna_cap_mw, "per_antenna_cap")?
            .unwrap_or(total_power);
    let noise_user = required(
        power_key(raw.noise_user_dbm, raw.noise_user_mw, "noise_user")?,
        "noise_user_dbm",
    )?;
    // Targets share the user's noise floor unless given separately.
    let noise_targets =
        noise_key(raw.noise_targets_dbm, raw.noise_targets_mw, t)?.unwrap_or(vec![noise_user; t]);
    let to_c = |p: [f64; 2]| Complex::new(p[0], p[1]);
    let defaults = LambdaGridSpec::default();
    let cfg = ScenarioConfig {
        num_antennas: required(raw.num_antennas, "num_antennas")?,
        num_rf_links: required(raw.num_rf_links, "num_rf_links")?,
        spacing_ratio: raw.spacing_ratio.unwrap_or(0.5),
        untrusted_indices: required(raw.untrusted_indices, "untrusted_indices")?,
        user_angle: required(raw.user_angle, "user_angle")?,
        user_gain: raw.user_gain.map(to_c).unwrap_or(Complex::new(1.0, 0.0)),
        path_gains: raw
            .path_gains
            .map(|v| v.into_iter().map(to_c).collect())
            .unwrap_or(vec![Complex::new(1.0, 0.0); t]),
        target_angles,
        total_power,
        per_antenna_cap,
        noise_user,
        noise_targets,
        secrecy_floor: required(raw.secrecy_floor, "secrecy_floor")?,
        beam_halfwidth: required(raw.beam_halfwidth, "beam_halfwidth")?,
        grid_size: raw.grid_size.unwrap_or(181),
        penalty: raw.penalty,
        lambda_grid: LambdaGridSpec {
            min: raw.lambda_min.unwrap_or(defaults.min),
            max: raw.lambda_max.unwrap_or(defaults.max),
            points: raw.lambda_points.unwrap_or(defaults.points),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Array response of an `m`-element ULA toward `theta_deg`:
/// entry `k` is `exp(i 2π k d/λ sin θ)`.
pub fn steering_vector(theta_deg: f64, m: usize, spacing_ratio: f64) -> CVector {
    let phase = 2.0 * PI * spacing_ratio * theta_deg.to_radians().sin();
    CVector::from_fn(m, |k, _| Complex::from_polar(1.0, phase * k as f64))
}

/// User and target channels. Stored as column vectors; the received signal
/// at target `j` is `g_j^H x`.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub user: CVector,
    pub targets: Vec<CVector>,
    pub user_angle: f64,
    pub target_angles: Vec<f64>,
}

impl ChannelSet {
    pub fn num_antennas(&self) -> usize {
        self.user.len()
    }

    /// Restriction of every channel to the antennas in `support`.
    pub fn restrict(&self, support: &[usize]) -> ChannelSet {
        let pick = |v: &CVector| CVector::from_iterator(support.len(), support.iter().map(|&i| v[i]));
        ChannelSet {
            user: pick(&self.user),
            targets: self.targets.iter().map(pick).collect(),
            user_angle: self.user_angle,
            target_angles: self.target_angles.clone(),
        }
    }
}

pub fn build_channels(cfg: &ScenarioConfig) -> ChannelSet {
    let m = cfg.num_antennas;
    let user = steering_vector(cfg.user_angle, m, cfg.spacing_ratio) * cfg.user_gain;
    let targets = cfg
        .target_angles
        .iter()
        .zip(&cfg.path_gains)
        .map(|(&theta, &alpha)| steering_vector(theta, m, cfg.spacing_ratio) * alpha)
        .collect();
    ChannelSet {
        user,
        targets,
        user_angle: cfg.user_angle,
        target_angles: cfg.target_angles.clone(),
    }
}
