//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! The embedding
//!
//! ```text
//!   A x − b τ = 0,   Aᵀ y + s − c τ = 0,   bᵀy − cᵀx − κ = 0,
//!   x ∈ K, s ∈ K*, τ, κ ≥ 0
//! ```
//!
//! is solved from the all-ones start. The Newton system is reduced to the
//! normal equations `A W² Aᵀ`, assembled from sparse vector columns and the
//! low-rank PSD coefficients.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use super::cones::{jordan, max_step, Point, Scaling};
use super::presolve::StandardForm;
use super::{SolveStatus, Tolerances};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Converged only to the reduced tolerance after stalling.
    pub inaccurate: bool,
}

pub(crate) struct IpmResult {
    pub status: SolveStatus,
    pub x_vec: DVector<f64>,
    pub x_mats: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub stats: SolveStats,
}

struct Iterate {
    x: Point,
    s: Point,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Point,
    rg: f64,
}

struct Direction {
    dx: Point,
    ds: Point,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Verdict {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Continue,
}

struct Measures {
    pres: f64,
    dres: f64,
    gap: f64,
    pcost: f64,
    dcost: f64,
}

pub(crate) fn solve(f: &StandardForm, tol: &Tolerances) -> IpmResult {
    let layout = &f.layout;
    let nu = layout.degree() + 1.0;
    let bnorm = f.b.norm().max(1.0);
    let cnorm = f.c.norm().max(1.0);

    let mut it = Iterate {
        x: Point::identity(layout),
        s: Point::identity(layout),
        y: DVector::zeros(f.m),
        tau: 1.0,
        kappa: 1.0,
    };
    let mut stats = SolveStats::default();
    let mut best: Option<(f64, Iterate, SolveStats)> = None;

    let finish = |status: SolveStatus, it: &Iterate, stats: SolveStats| {
        let scale = if status == SolveStatus::Optimal { 1.0 / it.tau } else { 1.0 };
        let mut x = it.x.clone();
        x.scale(scale);
        IpmResult {
            status,
            x_vec: x.vec,
            x_mats: x.mats,
            y: it.y.clone(),
            stats,
        }
    };

    for k in 0..=tol.max_iterations {
        let res = residuals(f, &it);
        let meas = measures(f, &it, &res, bnorm, cnorm);
        stats.iterations = k;
        stats.primal_residual = meas.pres;
        stats.dual_residual = meas.dres;
        stats.gap = meas.gap;
        stats.primal_objective = meas.pcost;
        stats.dual_objective = meas.dcost;

        match verdict(f, &it, &meas, tol, bnorm, cnorm, 1.0) {
            Verdict::Optimal => return finish(SolveStatus::Optimal, &it, stats),
            Verdict::PrimalInfeasible => return finish(SolveStatus::Infeasible, &it, stats),
            Verdict::DualInfeasible => return finish(SolveStatus::Unbounded, &it, stats),
            Verdict::Continue => {}
        }
        let merit = meas.pres.max(meas.dres).max(meas.gap / (1.0 + meas.pcost.abs()));
        if it.tau > 0.0 && best.as_ref().is_none_or(|(m, _, _)| merit < *m) {
            best = Some((
                merit,
                Iterate {
                    x: it.x.clone(),
                    s: it.s.clone(),
                    y: it.y.clone(),
                    tau: it.tau,
                    kappa: it.kappa,
                },
                stats.clone(),
            ));
        }
        if k == tol.max_iterations {
            break;
        }

        let Some(step) = iterate_once(f, &mut it, &res, nu) else {
            break;
        };
        if step < 1e-10 {
            break;
        }
    }

    // Stalled: accept the best iterate at reduced accuracy if it qualifies.
    let relaxed = 100.0;
    if let Some((_, b_it, mut b_stats)) = best {
        let res = residuals(f, &b_it);
        let meas = measures(f, &b_it, &res, bnorm, cnorm);
        b_stats.inaccurate = true;
        match verdict(f, &b_it, &meas, tol, bnorm, cnorm, relaxed) {
            Verdict::Optimal => return finish(SolveStatus::Optimal, &b_it, b_stats),
            Verdict::PrimalInfeasible => return finish(SolveStatus::Infeasible, &b_it, b_stats),
            Verdict::DualInfeasible => return finish(SolveStatus::Unbounded, &b_it, b_stats),
            Verdict::Continue => {}
        }
    }
    let res = residuals(f, &it);
    let meas = measures(f, &it, &res, bnorm, cnorm);
    stats.inaccurate = true;
    match verdict(f, &it, &meas, tol, bnorm, cnorm, relaxed) {
        Verdict::PrimalInfeasible => finish(SolveStatus::Infeasible, &it, stats),
        Verdict::DualInfeasible => finish(SolveStatus::Unbounded, &it, stats),
        _ => finish(SolveStatus::NumericalFailure, &it, stats),
    }
}

fn residuals(f: &StandardForm, it: &Iterate) -> Residuals {
    let rp = &f.b * it.tau - f.apply_a(&it.x);
    let mut rd = f.c.clone();
    rd.scale(it.tau);
    rd.axpy(-1.0, &f.apply_at(&it.y));
    rd.axpy(-1.0, &it.s);
    let rg = it.kappa + f.c.dot(&it.x) - f.b.dot(&it.y);
    Residuals { rp, rd, rg }
}

fn measures(f: &StandardForm, it: &Iterate, res: &Residuals, bnorm: f64, cnorm: f64) -> Measures {
    let tau = it.tau.max(1e-300);
    Measures {
        pres: res.rp.norm() / tau / bnorm,
        dres: res.rd.norm() / tau / cnorm,
        gap: it.x.dot(&it.s) / (tau * tau),
        pcost: f.c.dot(&it.x) / tau,
        dcost: f.b.dot(&it.y) / tau,
    }
}

fn verdict(
    f: &StandardForm,
    it: &Iterate,
    m: &Measures,
    tol: &Tolerances,
    bnorm: f64,
    cnorm: f64,
    relax: f64,
) -> Verdict {
    let feas = tol.feasibility * relax;
    let rel = (m.gap / m.pcost.abs().min(m.dcost.abs()).max(1e-12)).min(
        (m.pcost - m.dcost).abs() / m.pcost.abs().min(m.dcost.abs()).max(1e-12),
    );
    if m.pres <= feas
        && m.dres <= feas
        && (m.gap <= tol.absolute_gap * relax || rel <= tol.relative_gap * relax)
        && (m.pcost - m.dcost).abs() <= (tol.absolute_gap + tol.relative_gap * m.pcost.abs()) * relax * 10.0
    {
        return Verdict::Optimal;
    }
    let inf = tol.infeasibility * relax;
    let by = f.b.dot(&it.y);
    if by > 0.0 {
        let mut aty = f.apply_at(&it.y);
        aty.axpy(1.0, &it.s);
        if aty.norm() / cnorm <= inf * by / bnorm {
            return Verdict::PrimalInfeasible;
        }
    }
    let cx = f.c.dot(&it.x);
    if cx < 0.0 && f.apply_a(&it.x).norm() / bnorm <= inf * (-cx) / cnorm {
        return Verdict::DualInfeasible;
    }
    Verdict::Continue
}

/// Assembles and factors `A W² Aᵀ`.
struct Normal {
    chol: Cholesky<f64, nalgebra::Dyn>,
    mat: DMatrix<f64>,
}

impl Normal {
    fn new(f: &StandardForm, sc: &Scaling) -> Option<Self> {
        let m = f.m;
        let layout = &f.layout;
        let mut n = DMatrix::zeros(m, m);
        for (j, d2) in sc.lp_d2().enumerate() {
            let col = &f.cols[j];
            for &(r1, v1) in col {
                for &(r2, v2) in col {
                    n[(r1, r2)] += d2 * v1 * v2;
                }
            }
        }
        for ((b2, v), &(start, dim)) in sc.soc_factors().zip(&layout.soc) {
            let mut av = DVector::zeros(m);
            let mut ajv = DVector::zeros(m);
            for t in 0..dim {
                let jv = if t == 0 { v[0] } else { -v[t] };
                for &(r, a) in &f.cols[start + t] {
                    av[r] += a * v[t];
                    ajv[r] += a * jv;
                    for &(r2, a2) in &f.cols[start + t] {
                        n[(r, r2)] += b2 * a * a2;
                    }
                }
            }
            let vv = v.norm_squared();
            n.ger(4.0 * b2 * vv, &av, &av, 1.0);
            n.ger(-2.0 * b2, &av, &ajv, 1.0);
            n.ger(-2.0 * b2, &ajv, &av, 1.0);
        }
        for (k, pr) in f.psd.iter().enumerate() {
            if pr.rows.is_empty() {
                continue;
            }
            let w = sc.psd_w(k);
            let p = pr.vecs.transpose() * w * &pr.vecs;
            let kk = pr.rows.len();
            for a in 0..kk {
                let ra = pr.rows[a];
                let wa = pr.weights[a];
                for b in 0..kk {
                    let pab = p[(a, b)];
                    n[(ra, pr.rows[b])] += wa * pr.weights[b] * pab * pab;
                }
            }
        }
        let n = (&n + n.transpose()) * 0.5;
        let maxdiag = n.diagonal().amax().max(1e-300);
        let mut reg = 1e-14 * maxdiag;
        for _ in 0..8 {
            let mut nr = n.clone();
            for i in 0..m {
                nr[(i, i)] += reg;
            }
            if let Some(chol) = Cholesky::new(nr) {
                return Some(Self { chol, mat: n });
            }
            reg *= 100.0;
        }
        None
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(rhs);
        for _ in 0..2 {
            let r = rhs - &self.mat * &x;
            x += self.chol.solve(&r);
        }
        x
    }
}

fn iterate_once(f: &StandardForm, it: &mut Iterate, res: &Residuals, nu: f64) -> Option<f64> {
    let layout = &f.layout;
    let sc = Scaling::new(layout, &it.x, &it.s)?;
    let normal = Normal::new(f, &sc)?;
    let mu = (it.x.dot(&it.s) + it.tau * it.kappa) / nu;

    let w2c = sc.w2(layout, &f.c);
    let q = normal.solve(&(f.apply_a(&w2c) + &f.b));
    let mut atq_c = f.apply_at(&q);
    atq_c.axpy(-1.0, &f.c);
    let x1 = sc.w2(layout, &atq_c);

    let newton = |eta: f64, rc: &Point, rtau: f64| -> Direction {
        let xi = sc.lambda_div(layout, rc);
        let wxi = sc.w_primal(layout, &xi);
        let w2rd = sc.w2(layout, &res.rd);
        let rhs = &res.rp * eta - f.apply_a(&wxi) + f.apply_a(&w2rd) * eta;
        let p = normal.solve(&rhs);
        let mut x0 = wxi;
        x0.axpy(-eta, &w2rd);
        x0.axpy(1.0, &sc.w2(layout, &f.apply_at(&p)));
        let num = rtau - it.tau * (f.b.dot(&p) - f.c.dot(&x0) - eta * res.rg);
        let den = it.kappa + it.tau * (f.b.dot(&q) - f.c.dot(&x1));
        let dtau = num / den;
        let dy = &p + &q * dtau;
        let mut dx = x0;
        dx.axpy(dtau, &x1);
        let mut ds = res.rd.clone();
        ds.scale(eta);
        ds.axpy(-1.0, &f.apply_at(&dy));
        ds.axpy(dtau, &f.c);
        let dkappa = (rtau - it.kappa * dtau) / it.tau;
        dx.symmetrize();
        ds.symmetrize();
        Direction {
            dx,
            ds,
            dy,
            dtau,
            dkappa,
        }
    };

    let step_to_boundary = |d: &Direction| -> f64 {
        let mut a = max_step(layout, &it.x, &d.dx).min(max_step(layout, &it.s, &d.ds));
        if d.dtau < 0.0 {
            a = a.min(-it.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            a = a.min(-it.kappa / d.dkappa);
        }
        a
    };

    let ll = jordan(layout, &sc.lambda, &sc.lambda);
    let mut rc_aff = ll.clone();
    rc_aff.scale(-1.0);
    let aff = newton(1.0, &rc_aff, -it.tau * it.kappa);
    let alpha_aff = step_to_boundary(&aff).min(1.0);
    let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

    let corr = jordan(
        layout,
        &sc.w_inv_primal(layout, &aff.dx),
        &sc.w_dual(layout, &aff.ds),
    );
    let mut rc = rc_aff;
    rc.axpy(sigma * mu, &Point::identity(layout));
    rc.axpy(-1.0, &corr);
    let rtau = -it.tau * it.kappa + sigma * mu - aff.dtau * aff.dkappa;
    let d = newton(1.0 - sigma, &rc, rtau);
    let alpha = (0.99 * step_to_boundary(&d)).min(1.0);
    if !alpha.is_finite() || alpha <= 0.0 {
        return Some(0.0);
    }

    it.x.axpy(alpha, &d.dx);
    it.s.axpy(alpha, &d.ds);
    it.y += &d.dy * alpha;
    it.tau += alpha * d.dtau;
    it.kappa += alpha * d.dkappa;
    Some(alpha)
}

#[cfg(test)]
mod tests {
    use crate::conic::{
        solve, AffineExpr, ConeProgram, ConstraintKind, ConstraintLabel, Domain, LowRankSym, SolveStatus,
        Tolerances,
    };
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn soc_norm_of_three_four_is_five() {
        let mut p = ConeProgram::new();
        let t = p.add_scalar("t", Domain::Free);
        let r1 = p.add_scalar("r1", Domain::Free);
        let r2 = p.add_scalar("r2", Domain::Free);
        p.add_constraint(ConstraintLabel::new("r1"), ConstraintKind::Zero(AffineExpr::var(r1).plus_constant(-3.0)));
        p.add_constraint(ConstraintLabel::new("r2"), ConstraintKind::Zero(AffineExpr::var(r2).plus_constant(-4.0)));
        p.add_constraint(
            ConstraintLabel::new("cone"),
            ConstraintKind::Soc(vec![AffineExpr::var(t), AffineExpr::var(r1), AffineExpr::var(r2)]),
        );
        p.set_objective(AffineExpr::var(t));
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_relative_eq!(s.scalar(t), 5.0, epsilon = 1e-6);
        assert_relative_eq!(s.objective, 5.0, epsilon = 1e-6);
    }

    #[test]
    fn trace_one_feasibility() {
        let mut p = ConeProgram::new();
        let b = p.add_block("X", 2);
        p.add_constraint(
            ConstraintLabel::new("trace"),
            ConstraintKind::Zero(AffineExpr::constant(-1.0).plus_block(b, LowRankSym::scaled_identity(2, 1.0))),
        );
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.objective.abs() < 1e-9);
        let x = s.block(b);
        assert_relative_eq!(x.trace(), 1.0, epsilon = 1e-7);
        assert!(x.symmetric_eigenvalues().min() >= -1e-9);
    }

    #[test]
    fn small_lp() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  ->  (1.6, 1.2)
        let mut p = ConeProgram::new();
        let x = p.add_scalar("x", Domain::NonNeg);
        let y = p.add_scalar("y", Domain::NonNeg);
        p.add_constraint(
            ConstraintLabel::new("a"),
            ConstraintKind::NonNeg(AffineExpr::constant(4.0).plus_scalar(x, -1.0).plus_scalar(y, -2.0)),
        );
        p.add_constraint(
            ConstraintLabel::new("b"),
            ConstraintKind::NonNeg(AffineExpr::constant(6.0).plus_scalar(x, -3.0).plus_scalar(y, -1.0)),
        );
        p.set_objective(AffineExpr::default().plus_scalar(x, -1.0).plus_scalar(y, -1.0));
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_relative_eq!(s.scalar(x), 1.6, epsilon = 1e-6);
        assert_relative_eq!(s.scalar(y), 1.2, epsilon = 1e-6);
        assert_relative_eq!(s.objective, -2.8, epsilon = 1e-7);
    }

    #[test]
    fn min_eigenvalue_sdp() {
        // max t s.t. C - tI ⪰ 0  <=>  min -t s.t. X = C - tI, X ⪰ 0
        let c = nalgebra::DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let mut p = ConeProgram::new();
        let t = p.add_scalar("t", Domain::Free);
        let b = p.add_block("X", 3);
        for i in 0..3 {
            for j in 0..=i {
                let mut coef = LowRankSym::new();
                let mut e = DVector::zeros(3);
                if i == j {
                    e[i] = 1.0;
                    coef.push(1.0, e);
                } else {
                    // ⟨(e_i e_jᵀ + e_j e_iᵀ)/2, X⟩ = X_ij
                    let mut plus = DVector::zeros(3);
                    plus[i] = 1.0;
                    plus[j] = 1.0;
                    let mut minus = DVector::zeros(3);
                    minus[i] = 1.0;
                    minus[j] = -1.0;
                    coef.push(0.25, plus);
                    coef.push(-0.25, minus);
                }
                let diag_t = if i == j { 1.0 } else { 0.0 };
                p.add_constraint(
                    ConstraintLabel::indexed("entry", i * 3 + j),
                    ConstraintKind::Zero(
                        AffineExpr::constant(-c[(i, j)]).plus_block(b, coef).plus_scalar(t, diag_t),
                    ),
                );
            }
        }
        p.set_objective(AffineExpr::default().plus_scalar(t, -1.0));
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_relative_eq!(s.scalar(t), 2.0 - 2.0f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        // x >= 0, y >= 0, x + y == -1
        let mut p = ConeProgram::new();
        let x = p.add_scalar("x", Domain::NonNeg);
        let y = p.add_scalar("y", Domain::NonNeg);
        p.add_constraint(ConstraintLabel::new("pos"), ConstraintKind::NonNeg(AffineExpr::var(x)));
        p.add_constraint(
            ConstraintLabel::new("sum"),
            ConstraintKind::Zero(AffineExpr::constant(1.0).plus_scalar(x, 1.0).plus_scalar(y, 1.0)),
        );
        p.set_objective(AffineExpr::var(x));
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert_eq!(s.dominant_constraint.unwrap().family, "sum");
    }

    #[test]
    fn infeasible_psd_trace() {
        let mut p = ConeProgram::new();
        let b = p.add_block("X", 2);
        p.add_constraint(
            ConstraintLabel::new("trace"),
            ConstraintKind::Zero(AffineExpr::constant(1.0).plus_block(b, LowRankSym::scaled_identity(2, 1.0))),
        );
        let s = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }
}
