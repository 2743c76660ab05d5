//! The semidefinite-relaxed beampattern subproblem for a fixed eavesdropper
//! SINR cap `λ`.
//!
//! Powers are normalized by `P_all` before the program is built, so the
//! trace budget is 1 and the objective is the matching error divided by
//! `P_all²`. Solutions are scaled back to milliwatts on extraction.

use nalgebra::{DMatrix, DVector};

use super::pscp::pscp_linearize;
use crate::conic::{
    self, deembed, diagonal_coefficients, quadratic_form_coefficients, trace_coefficients, AffineExpr,
    BlockVar, ConeProgram, ConstraintKind, ConstraintLabel, Domain, LowRankSym, ScalarVar, SolveStats,
    SolveStatus, Tolerances,
};
use crate::linalg::{CMatrix, C64};
use crate::metrics::AngleGrid;
use crate::scenario::{steering_vector, ChannelSet, ScenarioConfig};

/// How the antenna allocation enters the subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum AllocationMode {
    /// Fractional `u ∈ [0,1]^M` with `Σu = G`, penalized by `η H̃(u)`
    /// linearized at `u_prev`.
    Relaxed { u_prev: Vec<f64>, eta: f64 },
    /// Binary allocation given by its support (0-based antenna indices);
    /// only the selected antennas are modeled.
    Fixed { support: Vec<usize> },
}

/// `β = 2^{R_0} (1 + λ) − 1`, the user SINR floor induced by the cap `λ`.
pub fn secrecy_beta(secrecy_floor: f64, lambda: f64) -> f64 {
    2f64.powf(secrecy_floor) * (1.0 + lambda) - 1.0
}

#[derive(Debug, Clone)]
pub struct SdrLayout {
    pub mu: ScalarVar,
    pub t: ScalarVar,
    pub residuals: Vec<ScalarVar>,
    pub allocation: Option<Vec<ScalarVar>>,
    pub comm: BlockVar,
    pub sensing: BlockVar,
    /// Antennas modeled by the blocks, in block order.
    pub support: Vec<usize>,
    pub num_antennas: usize,
    pub power_scale: f64,
}

#[derive(Debug, Clone)]
pub struct SdrProblem {
    pub program: ConeProgram,
    pub layout: SdrLayout,
    pub lambda: f64,
    pub beta: f64,
    pub eta: f64,
    /// Largest user SINR any feasible point can reach: `‖h‖² P_all / σ_u²`
    /// over the modeled antennas, since `h^H W_c h ≤ ‖h‖² Tr(W_c)`.
    pub sinr_ceiling: f64,
    user_form: LowRankSym,
    user_noise: f64,
}

impl SdrProblem {
    /// User SINR of an embedded point (`h^H W_c h / (h^H S h + σ_u²)`).
    fn user_sinr(&self, comm: &DMatrix<f64>, sensing: &DMatrix<f64>) -> f64 {
        self.user_form.inner(comm) / (self.user_form.inner(sensing) + self.user_noise)
    }
}

pub fn build_sdr_p5(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    grid: &AngleGrid,
    lambda: f64,
    mode: &AllocationMode,
) -> SdrProblem {
    let m_full = channels.num_antennas();
    let support: Vec<usize> = match mode {
        AllocationMode::Relaxed { .. } => (0..m_full).collect(),
        AllocationMode::Fixed { support } => support.clone(),
    };
    let ch = if support.len() == m_full {
        channels.clone()
    } else {
        channels.restrict(&support)
    };
    let n = support.len();
    let p_all = cfg.total_power;
    let cap = cfg.per_antenna_cap / p_all;
    let noise_user = cfg.noise_user / p_all;
    let beta = secrecy_beta(cfg.secrecy_floor, lambda);
    let q = grid.len();
    let inv_sqrt_q = 1.0 / (q as f64).sqrt();

    let mut p = ConeProgram::new();
    let mu = p.add_scalar("mu", Domain::NonNeg);
    let t = p.add_scalar("t", Domain::Free);
    let residuals: Vec<ScalarVar> = (0..q).map(|i| p.add_scalar(format!("r{i}"), Domain::Free)).collect();
    let allocation = match mode {
        AllocationMode::Relaxed { .. } => {
            Some((0..n).map(|i| p.add_scalar(format!("u{i}"), Domain::NonNeg)).collect::<Vec<_>>())
        }
        AllocationMode::Fixed { .. } => None,
    };
    let comm = p.add_block("W_c", 2 * n);
    let sensing = p.add_block("S", 2 * n);

    let tr = trace_coefficients(n);
    p.add_constraint(
        ConstraintLabel::new("total_power"),
        ConstraintKind::Zero(
            AffineExpr::constant(-1.0)
                .plus_block(comm, tr.clone())
                .plus_block(sensing, tr),
        ),
    );

    for k in 0..n {
        let d = diagonal_coefficients(k, n);
        let mut e = AffineExpr::default()
            .plus_block(comm, d.scaled(-1.0))
            .plus_block(sensing, d.scaled(-1.0));
        e = match &allocation {
            Some(u) => e.plus_scalar(u[k], cap),
            None => e.plus_constant(cap),
        };
        p.add_constraint(ConstraintLabel::indexed("antenna_cap", support[k]), ConstraintKind::NonNeg(e));
    }

    if let Some(u) = &allocation {
        let mut sum = AffineExpr::constant(-(cfg.num_rf_links as f64));
        for &v in u {
            sum = sum.plus_scalar(v, 1.0);
        }
        p.add_constraint(ConstraintLabel::new("rf_links"), ConstraintKind::Zero(sum));
        for (k, &v) in u.iter().enumerate() {
            p.add_constraint(
                ConstraintLabel::indexed("allocation_lower", k),
                ConstraintKind::NonNeg(AffineExpr::var(v)),
            );
            p.add_constraint(
                ConstraintLabel::indexed("allocation_upper", k),
                ConstraintKind::NonNeg(AffineExpr::constant(1.0).plus_scalar(v, -1.0)),
            );
        }
    }

    for j in cfg.untrusted() {
        let g = quadratic_form_coefficients(&ch.targets[j]);
        let noise = cfg.noise_targets[j] / p_all;
        p.add_constraint(
            ConstraintLabel::indexed("eavesdropper_cap", j),
            ConstraintKind::NonNeg(
                AffineExpr::constant(lambda * noise)
                    .plus_block(sensing, g.scaled(lambda))
                    .plus_block(comm, g.scaled(-1.0)),
            ),
        );
    }

    let h = quadratic_form_coefficients(&ch.user);
    p.add_constraint(
        ConstraintLabel::new("user_floor"),
        ConstraintKind::NonNeg(
            AffineExpr::constant(-beta * noise_user)
                .plus_block(comm, h.clone())
                .plus_block(sensing, h.scaled(-beta)),
        ),
    );

    for (i, &theta) in grid.angles.iter().enumerate() {
        let a_full = steering_vector(theta, m_full, cfg.spacing_ratio);
        let a = DVector::<C64>::from_iterator(n, support.iter().map(|&k| a_full[k]));
        let c = quadratic_form_coefficients(&a).scaled(-inv_sqrt_q);
        p.add_constraint(
            ConstraintLabel::indexed("residual", i),
            ConstraintKind::Zero(
                AffineExpr::var(residuals[i])
                    .plus_block(comm, c.clone())
                    .plus_block(sensing, c)
                    .plus_scalar(mu, grid.desired[i] * inv_sqrt_q),
            ),
        );
    }

    // (t+1)² ≥ (t−1)² + 4‖r‖²  ⟺  t ≥ ‖r‖²
    let mut cone = vec![AffineExpr::var(t).plus_constant(1.0), AffineExpr::var(t).plus_constant(-1.0)];
    cone.extend(residuals.iter().map(|&r| AffineExpr::default().plus_scalar(r, 2.0)));
    p.add_constraint(ConstraintLabel::new("epigraph"), ConstraintKind::Soc(cone));

    let mut objective = AffineExpr::var(t);
    let mut eta = 0.0;
    if let (AllocationMode::Relaxed { u_prev, eta: e }, Some(u)) = (mode, &allocation) {
        eta = *e;
        if eta > 0.0 {
            let lin = pscp_linearize(u_prev);
            for (&v, &a) in u.iter().zip(&lin.slopes) {
                objective = objective.plus_scalar(v, eta * a);
            }
            objective = objective.plus_constant(eta * lin.constant);
        }
    }
    p.set_objective(objective);

    SdrProblem {
        program: p,
        layout: SdrLayout {
            mu,
            t,
            residuals,
            allocation,
            comm,
            sensing,
            support,
            num_antennas: m_full,
            power_scale: p_all,
        },
        lambda,
        beta,
        eta,
        sinr_ceiling: ch.user.norm_squared() / noise_user,
        user_form: h,
        user_noise: noise_user,
    }
}

/// De-embedded solution of one subproblem, in milliwatts on the full array.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub lambda: f64,
    pub beta: f64,
    pub comm: CMatrix,
    pub sensing: CMatrix,
    pub mu: f64,
    pub allocation: Vec<f64>,
    /// Penalized objective in normalized units (`K / P_all² + η H̃(u)`).
    pub objective: f64,
    /// Epigraph value `t`, the normalized matching error.
    pub matching_error: f64,
    /// `t − ‖r‖²`, zero when the epigraph is tight.
    pub epigraph_gap: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemFailure {
    pub lambda: f64,
    pub status: SolveStatus,
    pub dominant_constraint: Option<ConstraintLabel>,
    pub detail: String,
}

pub fn solve_subproblem(problem: &SdrProblem, tol: &Tolerances) -> Result<SubproblemSolution, SubproblemFailure> {
    let fail = |status, dominant_constraint, detail: String| SubproblemFailure {
        lambda: problem.lambda,
        status,
        dominant_constraint,
        detail,
    };
    if problem.beta > problem.sinr_ceiling {
        return Err(fail(
            SolveStatus::Infeasible,
            Some(ConstraintLabel::new("user_floor")),
            format!(
                "user SINR floor {:.3e} exceeds the array-gain ceiling {:.3e}",
                problem.beta, problem.sinr_ceiling
            ),
        ));
    }
    let sol = conic::solve(&problem.program, tol)
        .map_err(|e| fail(SolveStatus::NumericalFailure, None, e.to_string()))?;
    if sol.status != SolveStatus::Optimal {
        return Err(fail(sol.status, sol.dominant_constraint.clone(), format!("{:?}", sol.status)));
    }
    let l = &problem.layout;
    let scale = l.power_scale;
    let expand = |x: &CMatrix| {
        let mut full = CMatrix::zeros(l.num_antennas, l.num_antennas);
        for (a, &i) in l.support.iter().enumerate() {
            for (b, &j) in l.support.iter().enumerate() {
                full[(i, j)] = x[(a, b)] * scale;
            }
        }
        full
    };
    let comm = expand(&deembed(sol.block(l.comm)));
    let sensing = expand(&deembed(sol.block(l.sensing)));
    let allocation = match &l.allocation {
        Some(u) => u.iter().map(|&v| sol.scalar(v).clamp(0.0, 1.0)).collect(),
        None => {
            let mut u = vec![0.0; l.num_antennas];
            for &i in &l.support {
                u[i] = 1.0;
            }
            u
        }
    };
    let sinr = problem.user_sinr(&sol.blocks[l.comm.index()], &sol.blocks[l.sensing.index()]);
    if sinr < problem.beta * (1.0 - 1e-6) {
        return Err(fail(
            SolveStatus::NumericalFailure,
            Some(ConstraintLabel::new("user_floor")),
            format!("solver point reaches user SINR {sinr:.6e} below the floor {:.6e}", problem.beta),
        ));
    }
    let t = sol.scalar(l.t);
    let r2: f64 = l.residuals.iter().map(|&r| sol.scalar(r).powi(2)).sum();
    Ok(SubproblemSolution {
        lambda: problem.lambda,
        beta: problem.beta,
        comm,
        sensing,
        mu: sol.scalar(l.mu) * scale,
        allocation,
        objective: sol.objective,
        matching_error: t,
        epigraph_gap: t - r2,
        stats: sol.stats,
    })
}

