//! Performance metrics: beampatterns, SINRs, secrecy rate, and a Monte-Carlo
//! check of the radiated power against explicit symbol draws.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, CMatrix, CVector, C64};
use crate::par::{self, Execution};
use crate::scenario::{steering_vector, ChannelSet, ScenarioConfig};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("desired pattern is identically zero; the autoscale is undefined")]
    DegeneratePattern,
}

/// Transmit covariances and allocation produced by the optimizer.
#[derive(Debug, Clone)]
pub struct BeamformingDesign {
    /// Communication covariance `W_c`.
    pub comm: CMatrix,
    /// Aggregate sensing covariance `S`.
    pub sensing: CMatrix,
    pub mu: f64,
    pub allocation: Vec<f64>,
    pub comm_beam: Option<CVector>,
    pub sensing_beams: Vec<CVector>,
}

impl BeamformingDesign {
    pub fn total(&self) -> CMatrix {
        &self.comm + &self.sensing
    }

    /// Violations of the design invariants, empty when all hold. Covariances
    /// must be PSD up to `1e-8 * trace`, the total trace must equal
    /// `total_power`, per-antenna power must respect `u_m * cap`, and a
    /// present beam must reproduce `W_c`.
    pub fn invariant_violations(&self, total_power: f64, cap: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (name, m) in [("W_c", &self.comm), ("S", &self.sensing)] {
            let tr = linalg::trace_re(m).abs().max(f64::MIN_POSITIVE);
            let lo = linalg::min_eigenvalue(m);
            if lo < -1e-8 * tr {
                out.push(format!("{name} min eigenvalue {lo:e} below -1e-8 * trace"));
            }
        }
        let total = self.total();
        let tr = linalg::trace_re(&total);
        if (tr - total_power).abs() > 1e-6 * total_power {
            out.push(format!("total trace {tr} differs from budget {total_power}"));
        }
        for (m, &u) in self.allocation.iter().enumerate() {
            let d = total[(m, m)].re;
            if d > u * cap + 1e-8 * total_power.max(1.0) {
                out.push(format!("antenna {m} carries {d} > u_m * P_b = {}", u * cap));
            }
        }
        if let Some(w) = &self.comm_beam {
            let err = linalg::frobenius(&(linalg::outer(w) - &self.comm));
            if err > 1e-6 * linalg::frobenius(&self.comm).max(f64::MIN_POSITIVE) {
                out.push(format!("comm beam reproduces W_c only to {err:e}"));
            }
        }
        out
    }
}

/// Sample angles (degrees, ascending) with the desired pattern at each.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    pub angles: Vec<f64>,
    pub desired: Vec<f64>,
}

impl AngleGrid {
    /// `q` uniform samples over [-90°, 90°] inclusive of both ends.
    pub fn uniform(q: usize, targets: &[f64], user: f64, halfwidth: f64) -> Self {
        let angles: Vec<f64> = (0..q)
            .map(|i| {
                if i + 1 == q {
                    90.0
                } else {
                    -90.0 + 180.0 * i as f64 / (q - 1) as f64
                }
            })
            .collect();
        let desired = desired_pattern(&angles, targets, user, halfwidth);
        Self { angles, desired }
    }

    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        Self::uniform(cfg.grid_size, &cfg.target_angles, cfg.user_angle, cfg.beam_halfwidth)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn steering(&self, m: usize, spacing_ratio: f64) -> Vec<CVector> {
        self.angles.iter().map(|&a| steering_vector(a, m, spacing_ratio)).collect()
    }
}

/// Rectangular mask: 1 inside the closed band of half-width `halfwidth`
/// around any target or the user, 0 elsewhere.
pub fn desired_pattern(angles: &[f64], targets: &[f64], user: f64, halfwidth: f64) -> Vec<f64> {
    angles
        .iter()
        .map(|&theta| {
            let hit = targets
                .iter()
                .chain(std::iter::once(&user))
                .any(|&c| (theta - c).abs() <= halfwidth + 1e-12);
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `a(θ)^H (W_c + S) a(θ)`.
pub fn radiated_power(theta_deg: f64, comm: &CMatrix, sensing: &CMatrix, spacing_ratio: f64) -> f64 {
    let a = steering_vector(theta_deg, comm.nrows(), spacing_ratio);
    linalg::quad_form(comm, &a) + linalg::quad_form(sensing, &a)
}

/// Radiated power at every grid angle.
pub fn beampattern(total: &CMatrix, grid: &AngleGrid, spacing_ratio: f64, exec: Execution) -> Vec<f64> {
    let m = total.nrows();
    par::map(&grid.angles, exec, |&theta| {
        linalg::quad_form(total, &steering_vector(theta, m, spacing_ratio))
    })
}

/// Mean squared mismatch between sampled power and the scaled mask.
pub fn matching_error_samples(radiated: &[f64], desired: &[f64], mu: f64) -> f64 {
    let q = radiated.len() as f64;
    radiated
        .iter()
        .zip(desired)
        .map(|(&j, &d)| (j - mu * d).powi(2))
        .sum::<f64>()
        / q
}

pub fn matching_error(
    comm: &CMatrix,
    sensing: &CMatrix,
    mu: f64,
    grid: &AngleGrid,
    spacing_ratio: f64,
) -> f64 {
    let j = beampattern(&(comm + sensing), grid, spacing_ratio, Execution::Sequential);
    matching_error_samples(&j, &grid.desired, mu)
}

/// Least-squares autoscale for fixed covariances.
pub fn optimal_mu(radiated: &[f64], desired: &[f64]) -> Result<f64, MetricsError> {
    let dd: f64 = desired.iter().map(|d| d * d).sum();
    if dd == 0.0 {
        return Err(MetricsError::DegeneratePattern);
    }
    let jd: f64 = radiated.iter().zip(desired).map(|(j, d)| j * d).sum();
    Ok(jd / dd)
}

fn sinr(comm: &CMatrix, sensing: &CMatrix, channel: &CVector, noise: f64) -> f64 {
    let signal = linalg::quad_form(comm, channel).max(0.0);
    let interference = linalg::quad_form(sensing, channel).max(0.0);
    signal / (interference + noise)
}

/// `h^H W_c h / (h^H S h + σ_u²)`.
pub fn sinr_user(comm: &CMatrix, sensing: &CMatrix, user: &CVector, noise: f64) -> f64 {
    sinr(comm, sensing, user, noise)
}

/// SINR at target `j`; the sensing streams, including the one aimed at `j`,
/// count as interference.
pub fn sinr_target(comm: &CMatrix, sensing: &CMatrix, target: &CVector, noise: f64) -> f64 {
    sinr(comm, sensing, target, noise)
}

/// `log2(1 + SINR_u) - max_j log2(1 + SINR_j)` over the untrusted targets.
/// Not clamped at zero.
pub fn secrecy_rate_from_sinr(user: f64, eavesdroppers: &[f64]) -> f64 {
    let worst = eavesdroppers
        .iter()
        .map(|&s| (1.0 + s).log2())
        .fold(f64::NEG_INFINITY, f64::max);
    (1.0 + user).log2() - worst
}

pub fn secrecy_rate(design: &BeamformingDesign, channels: &ChannelSet, cfg: &ScenarioConfig) -> f64 {
    let su = sinr_user(&design.comm, &design.sensing, &channels.user, cfg.noise_user);
    let eaves: Vec<f64> = cfg
        .untrusted()
        .into_iter()
        .map(|j| sinr_target(&design.comm, &design.sensing, &channels.targets[j], cfg.noise_targets[j]))
        .collect();
    secrecy_rate_from_sinr(su, &eaves)
}

/// Writes `angle_deg,desired,radiated_mw` rows.
pub fn write_beampattern_csv<W: Write>(
    mut out: W,
    grid: &AngleGrid,
    radiated: &[f64],
) -> std::io::Result<()> {
    writeln!(out, "angle_deg,desired,radiated_mw")?;
    for ((a, d), j) in grid.angles.iter().zip(&grid.desired).zip(radiated) {
        writeln!(out, "{a},{d},{j}")?;
    }
    Ok(())
}

/// Parses a beampattern CSV back into `(angles, desired, radiated)`.
pub fn read_beampattern_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("angle_deg,desired,radiated_mw") => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let (mut a, mut d, mut j) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(format!("row {} has {} columns", n + 2, cols.len()));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", n + 2));
        a.push(p(cols[0])?);
        d.push(p(cols[1])?);
        j.push(p(cols[2])?);
    }
    Ok((a, d, j))
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloCheck {
    pub angle_deg: f64,
    pub analytic_mw: f64,
    pub empirical_mw: f64,
    pub relative_error: f64,
}

const MC_CHUNK: usize = 4096;

/// Empirical mean of `|a(θ)^H x[l]|²` over `draws` transmit snapshots, with
/// `x[l] = W_c^{1/2} s_c[l] + S^{1/2} s_s[l]` and unit-variance circularly
/// symmetric Gaussian symbols. Each column of a Hermitian square root acts
/// as one beamformer, so the expectation equals the analytic radiated power.
///
/// Draws are split into fixed chunks with one ChaCha stream each, so the
/// result depends only on `seed`, not on the thread schedule.
pub fn monte_carlo_radiated_power(
    comm: &CMatrix,
    sensing: &CMatrix,
    angles: &[f64],
    spacing_ratio: f64,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Vec<MonteCarloCheck> {
    let m = comm.nrows();
    let beams = {
        let wc = linalg::psd_sqrt(comm);
        let s = linalg::psd_sqrt(sensing);
        let mut cols: Vec<CVector> = wc.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(s.column_iter().map(|c| c.into_owned()));
        cols
    };
    let steering: Vec<CVector> = angles.iter().map(|&a| steering_vector(a, m, spacing_ratio)).collect();
    // Per-angle response of every beam: a^H w_k.
    let gains: Vec<Vec<C64>> = steering
        .iter()
        .map(|a| beams.iter().map(|w| a.dotc(w)).collect())
        .collect();
    let chunks: Vec<(usize, usize)> = (0..draws.div_ceil(MC_CHUNK))
        .map(|c| (c, MC_CHUNK.min(draws - c * MC_CHUNK)))
        .collect();
    let partial = par::map(&chunks, exec, |&(chunk, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let mut sums = vec![0.0; angles.len()];
        let mut symbols = vec![C64::new(0.0, 0.0); beams.len()];
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..n {
            for s in symbols.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *s = C64::new(re * half, im * half);
            }
            for (acc, g) in sums.iter_mut().zip(&gains) {
                let y: C64 = g.iter().zip(&symbols).map(|(gk, sk)| gk * sk).sum();
                *acc += y.norm_sqr();
            }
        }
        sums
    });
    let mut totals = vec![0.0; angles.len()];
    for p in partial {
        for (t, v) in totals.iter_mut().zip(p) {
            *t += v;
        }
    }
    angles
        .iter()
        .zip(totals)
        .map(|(&angle_deg, sum)| {
            let analytic_mw = radiated_power(angle_deg, comm, sensing, spacing_ratio);
            let empirical_mw = sum / draws as f64;
            MonteCarloCheck {
                angle_deg,
                analytic_mw,
                empirical_mw,
                relative_error: (empirical_mw - analytic_mw).abs() / analytic_mw.abs().max(f64::MIN_POSITIVE),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::outer;
    use approx::assert_relative_eq;
    use nalgebra::Complex;
    use rand::Rng;

    fn random_psd(m: usize, rank: usize, rng: &mut impl Rng) -> CMatrix {
        let f = CMatrix::from_fn(m, rank, |_, _| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &f * f.adjoint()
    }

    #[test]
    fn mask_center_and_gap() {
        assert_eq!(desired_pattern(&[-60.0], &[-60.0, 60.0], 0.0, 5.0), vec![1.0]);
        assert_eq!(desired_pattern(&[30.0], &[-60.0, 60.0], 0.0, 5.0), vec![0.0]);
        // closed interval
        assert_eq!(desired_pattern(&[5.0, 5.5], &[], 0.0, 5.0), vec![1.0, 0.0]);
    }

    #[test]
    fn mask_count_matches_membership_scan() {
        let targets = [-60.0, 60.0, -40.0, 40.0, -20.0, 20.0];
        let grid = AngleGrid::uniform(181, &targets, 0.0, 5.0);
        // brute force over integer degrees
        let mut expected = 0;
        for deg in -90i32..=90 {
            let centers = [-60, 60, -40, 40, -20, 20, 0];
            if centers.iter().any(|c| (deg - c).abs() <= 5) {
                expected += 1;
            }
        }
        assert_eq!(expected, 77);
        assert_eq!(grid.desired.iter().filter(|&&d| d == 1.0).count(), expected);
        assert!(grid.angles.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn identity_covariance_radiates_m() {
        let m = 8;
        let id = CMatrix::identity(m, m);
        let zero = CMatrix::zeros(m, m);
        for theta in [-70.0, 0.0, 33.0] {
            assert_relative_eq!(radiated_power(theta, &id, &zero, 0.5), m as f64, epsilon = 1e-12);
            assert_eq!(radiated_power(theta, &zero, &zero, 0.5), 0.0);
        }
    }

    #[test]
    fn matching_error_definition() {
        let grid = AngleGrid::uniform(37, &[-30.0], 20.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wc = random_psd(6, 2, &mut rng);
        let s = random_psd(6, 3, &mut rng);
        let k = matching_error(&wc, &s, 1.7, &grid, 0.5);
        // independent double loop
        let mut acc = 0.0;
        for (q, &theta) in grid.angles.iter().enumerate() {
            let phase = std::f64::consts::PI * theta.to_radians().sin();
            let mut j = Complex::new(0.0, 0.0);
            for r in 0..6 {
                for c in 0..6 {
                    let ar = Complex::from_polar(1.0, phase * r as f64);
                    let ac = Complex::from_polar(1.0, phase * c as f64);
                    j += ar.conj() * (wc[(r, c)] + s[(r, c)]) * ac;
                }
            }
            acc += (j.re - 1.7 * grid.desired[q]).powi(2);
        }
        assert_relative_eq!(k, acc / grid.len() as f64, max_relative = 1e-12);
        let j = beampattern(&(&wc + &s), &grid, 0.5, Execution::Sequential);
        let k0 = matching_error(&wc, &s, 0.0, &grid, 0.5);
        assert_relative_eq!(k0, j.iter().map(|v| v * v).sum::<f64>() / grid.len() as f64, max_relative = 1e-12);
    }

    #[test]
    fn optimal_mu_cases() {
        let d = [0.0, 1.0, 1.0, 0.0];
        assert_relative_eq!(optimal_mu(&[0.0, 2.5, 2.5, 0.0], &d).unwrap(), 2.5);
        assert_eq!(optimal_mu(&[1.0, 1.0, -1.0, 3.0], &d).unwrap(), 0.0);
        assert_eq!(optimal_mu(&[1.0; 4], &[0.0; 4]), Err(MetricsError::DegeneratePattern));
    }

    #[test]
    fn optimal_mu_beats_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let j: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 3.0).collect();
        let d: Vec<f64> = (0..50).map(|_| if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 }).collect();
        let mu = optimal_mu(&j, &d).unwrap();
        let (mut best, mut best_k) = (0.0, f64::INFINITY);
        for step in 0..=5000 {
            let cand = step as f64 * 1e-3;
            let k = matching_error_samples(&j, &d, cand);
            if k < best_k {
                best_k = k;
                best = cand;
            }
        }
        assert!((mu - best).abs() <= 1e-3, "mu {mu} grid {best}");
        for step in 0..100 {
            let pert = mu + (step as f64 - 50.0) * 0.013;
            assert!(matching_error_samples(&j, &d, mu) <= matching_error_samples(&j, &d, pert) + 1e-15);
        }
    }

    #[test]
    fn sinr_closed_forms() {
        let h = steering_vector(10.0, 4, 0.5);
        let p = 3.0;
        let wc = outer(&h) * Complex::new(p / h.norm_squared(), 0.0);
        let zero = CMatrix::zeros(4, 4);
        assert_relative_eq!(sinr_user(&wc, &zero, &h, 0.5), p * 4.0 / 0.5, max_relative = 1e-12);
        assert_relative_eq!(sinr_target(&wc, &zero, &h, 0.25), p * 4.0 / 0.25, max_relative = 1e-12);
        assert_eq!(sinr_user(&zero, &wc, &h, 0.5), 0.0);
        assert_eq!(sinr_target(&zero, &wc, &h, 0.5), 0.0);
    }

    #[test]
    fn sinr_matches_beam_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 6;
        let wc = random_psd(m, 3, &mut rng);
        let s = random_psd(m, 4, &mut rng);
        let h = steering_vector(-12.0, m, 0.5);
        let (vals, vecs) = linalg::hermitian_eigen(&s);
        let mut interference = 0.0;
        for (k, &v) in vals.iter().enumerate() {
            if v > 0.0 {
                let w = vecs.column(k) * Complex::new(v.sqrt(), 0.0);
                interference += h.dotc(&w).norm_sqr();
            }
        }
        let expanded = linalg::quad_form(&wc, &h) / (interference + 0.1);
        assert_relative_eq!(sinr_user(&wc, &s, &h, 0.1), expanded, max_relative = 1e-9);
        assert_relative_eq!(sinr_target(&wc, &s, &h, 0.1), expanded, max_relative = 1e-9);
    }

    #[test]
    fn secrecy_rate_closed_forms() {
        assert_eq!(secrecy_rate_from_sinr(2.0, &[2.0]), 0.0);
        assert_relative_eq!(secrecy_rate_from_sinr(3.0, &[1.0, 0.5]), 1.0, max_relative = 1e-15);
        assert!(secrecy_rate_from_sinr(0.1, &[5.0]) < 0.0);
    }

    #[test]
    fn secrecy_rate_is_min_over_eavesdroppers() {
        let mut cfg = ScenarioConfig::standard(12);
        cfg.num_antennas = 6;
        let ch = crate::scenario::build_channels(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let design = BeamformingDesign {
            comm: random_psd(6, 1, &mut rng),
            sensing: random_psd(6, 3, &mut rng),
            mu: 1.0,
            allocation: vec![1.0; 6],
            comm_beam: None,
            sensing_beams: vec![],
        };
        let su = sinr_user(&design.comm, &design.sensing, &ch.user, cfg.noise_user);
        let per_j: Vec<f64> = cfg
            .untrusted()
            .iter()
            .map(|&j| {
                let sj = sinr_target(&design.comm, &design.sensing, &ch.targets[j], cfg.noise_targets[j]);
                (1.0 + su).log2() - (1.0 + sj).log2()
            })
            .collect();
        let expected = per_j.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(secrecy_rate(&design, &ch, &cfg), expected, max_relative = 1e-12);
    }

    #[test]
    fn secrecy_rate_grows_with_user_power() {
        let cfg = ScenarioConfig::standard(12);
        let ch = crate::scenario::build_channels(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let base = random_psd(16, 2, &mut rng);
        let s = random_psd(16, 4, &mut rng);
        let mut last = f64::NEG_INFINITY;
        for k in 0..10 {
            let boost = outer(&ch.user) * Complex::new(0.01 * k as f64, 0.0);
            let d = BeamformingDesign {
                comm: &base + boost,
                sensing: s.clone(),
                mu: 1.0,
                allocation: vec![1.0; 16],
                comm_beam: None,
                sensing_beams: vec![],
            };
            let r = secrecy_rate(&d, &ch, &cfg);
            assert!(r >= last - 1e-12);
            last = r;
        }
    }

    #[test]
    fn csv_round_trip() {
        let grid = AngleGrid::uniform(5, &[0.0], 0.0, 10.0);
        let j = vec![0.5, 1.0 / 3.0, 2.0, 1e-9, 7.25];
        let mut buf = Vec::new();
        write_beampattern_csv(&mut buf, &grid, &j).unwrap();
        let (a, d, r) = read_beampattern_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(a, grid.angles);
        assert_eq!(d, grid.desired);
        assert_eq!(r, j);
    }

    #[test]
    fn monte_carlo_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let wc = random_psd(8, 1, &mut rng);
        let s = random_psd(8, 3, &mut rng);
        let checks = monte_carlo_radiated_power(&wc, &s, &[-40.0, -10.0, 0.0, 25.0, 60.0], 0.5, 100_000, 7, Execution::default());
        for c in &checks {
            assert!(c.relative_error < 0.01, "{c:?}");
        }
        let again = monte_carlo_radiated_power(&wc, &s, &[0.0], 0.5, 10_000, 7, Execution::Sequential);
        let par = monte_carlo_radiated_power(&wc, &s, &[0.0], 0.5, 10_000, 7, Execution::default());
        assert_eq!(again[0].empirical_mw, par[0].empirical_mw);
    }
}
