#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT::*,
};
use isac_core::linalg::{CMatrix, CVector, C64};
use isac_core::metrics::AngleGrid;
use isac_core::optimizer::{secrecy_beta, OptimizerOptions};
use isac_core::scenario::{steering_vector, ChannelSet, ScenarioConfig};
use nalgebra::Complex;
use rand::Rng;

use openblas_src as _;

/// Standard geometry shrunk to `m` antennas and the given targets; the
/// first `untrusted` targets are suspected eavesdroppers.
pub fn small_scenario(m: usize, g: usize, targets: &[f64], untrusted: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::standard(g);
    cfg.num_antennas = m;
    cfg.target_angles = targets.to_vec();
    cfg.untrusted_indices = (1..=untrusted).collect();
    cfg.path_gains = vec![C64::from(1.0); targets.len()];
    cfg.noise_targets = vec![cfg.noise_targets[0]; targets.len()];
    cfg.secrecy_floor = 2.0;
    cfg.lambda_grid.points = 13;
    cfg
}

pub fn fast_options() -> OptimizerOptions {
    OptimizerOptions::default()
}

pub fn rand_c(rng: &mut impl Rng) -> C64 {
    Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

pub fn random_vector(m: usize, rng: &mut impl Rng) -> CVector {
    CVector::from_fn(m, |_, _| rand_c(rng))
}

pub fn random_psd(m: usize, rank: usize, rng: &mut impl Rng) -> CMatrix {
    let f = CMatrix::from_fn(m, rank, |_, _| rand_c(rng));
    &f * f.adjoint()
}

/// Upper-triangle, column-major position of `(i, j)` with `i <= j`.
fn tri(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// Coefficients of `z^T Y z` over the upper-triangle entries of a symmetric `Y`.
fn quad_coeffs(z: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for j in 0..z.len() {
        for i in 0..=j {
            let c = if i == j { z[i] * z[i] } else { 2.0 * z[i] * z[j] };
            if c != 0.0 {
                out.push((tri(i, j), c));
            }
        }
    }
    out
}

fn stacked(a: &CVector) -> Vec<f64> {
    a.iter().map(|z| z.re).chain(a.iter().map(|z| z.im)).collect()
}

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn row(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let r = self.b.len();
        for &(col, val) in entries {
            self.i.push(r);
            self.j.push(col);
            self.v.push(val);
        }
        self.b.push(rhs);
    }
}

/// Optimal normalized matching error `K / P_all²` of the relaxed subproblem
/// on a fixed antenna support at one `λ`, from an independent formulation
/// solved by Clarabel. The complex covariances are modeled as real
/// symmetric `2n × 2n` matrices with the Hermitian block structure imposed
/// by explicit equalities. `None` when Clarabel does not report a solution.
pub fn reference_matching_error(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    support: &[usize],
    lambda: f64,
) -> Option<f64> {
    let n = support.len();
    let big = 2 * n;
    let nt = big * (big + 1) / 2;
    let yc = 0;
    let ys = nt;
    let mu = 2 * nt;
    let s = 2 * nt + 1;
    let nvar = 2 * nt + 2;
    let p = cfg.total_power;
    let pick = |v: &CVector| CVector::from_iterator(n, support.iter().map(|&i| v[i]));
    let on = |base: usize, coeffs: &[(usize, f64)], k: f64| -> Vec<(usize, f64)> {
        coeffs.iter().map(|&(c, v)| (base + c, k * v)).collect()
    };
    let mut rows = Rows {
        i: vec![],
        j: vec![],
        v: vec![],
        b: vec![],
    };

    // equalities
    let trace: Vec<(usize, f64)> = (0..n).flat_map(|k| [(yc + tri(k, k), 1.0), (ys + tri(k, k), 1.0)]).collect();
    rows.row(&trace, 1.0);
    for base in [yc, ys] {
        for j in 0..n {
            for i in 0..=j {
                rows.row(&[(base + tri(i, j), 1.0), (base + tri(n + i, n + j), -1.0)], 0.0);
            }
            for i in 0..n {
                if i <= j {
                    rows.row(&[(base + tri(i, n + j), 1.0), (base + tri(j, n + i), 1.0)], 0.0);
                }
            }
        }
    }
    let n_eq = rows.b.len();

    // inequalities, b - Ax >= 0
    for k in 0..n {
        rows.row(&[(yc + tri(k, k), 1.0), (ys + tri(k, k), 1.0)], cfg.per_antenna_cap / p);
    }
    for j in cfg.untrusted() {
        let g = quad_coeffs(&stacked(&pick(&channels.targets[j])));
        let mut e = on(yc, &g, 1.0);
        e.extend(on(ys, &g, -lambda));
        rows.row(&e, lambda * cfg.noise_targets[j] / p);
    }
    let beta = secrecy_beta(cfg.secrecy_floor, lambda);
    let h = quad_coeffs(&stacked(&pick(&channels.user)));
    let mut e = on(yc, &h, -1.0);
    e.extend(on(ys, &h, beta));
    rows.row(&e, -beta * cfg.noise_user / p);
    rows.row(&[(mu, -1.0)], 0.0);
    let n_ineq = rows.b.len() - n_eq;

    // ‖r‖ <= s
    rows.row(&[(s, -1.0)], 0.0);
    let w = 1.0 / (grid.len() as f64).sqrt();
    for (q, &theta) in grid.angles.iter().enumerate() {
        let a = pick(&steering_vector(theta, cfg.num_antennas, cfg.spacing_ratio));
        let c = quad_coeffs(&stacked(&a));
        let mut e = on(yc, &c, -w);
        e.extend(on(ys, &c, -w));
        e.push((mu, w * grid.desired[q]));
        rows.row(&e, 0.0);
    }

    let sqrt2 = 2f64.sqrt();
    for base in [yc, ys] {
        for j in 0..big {
            for i in 0..=j {
                rows.row(&[(base + tri(i, j), if i == j { -1.0 } else { -sqrt2 })], 0.0);
            }
        }
    }

    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, nvar, rows.i, rows.j, rows.v);
    let pmat = CscMatrix::zeros((nvar, nvar));
    let mut c = vec![0.0; nvar];
    c[s] = 1.0;
    let cones = [
        ZeroConeT(n_eq),
        NonnegativeConeT(n_ineq),
        SecondOrderConeT(grid.len() + 1),
        PSDTriangleConeT(big),
        PSDTriangleConeT(big),
    ];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .max_iter(400)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&pmat, &c, &a, &rows.b, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Some(solver.solution.x[s].powi(2)),
        _ => None,
    }
}
