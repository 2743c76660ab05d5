//! Conversion of a [`ConeProgram`] into the standard form
//! `min cᵀx  s.t.  A x = b,  x ∈ K` used by the interior-point method.
//!
//! Inequalities receive nonnegative slacks and cone memberships receive
//! second-order cone slack variables. Free scalars are eliminated by
//! Gaussian pivoting on the row where they carry the largest coefficient,
//! and every remaining row is scaled to unit norm.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::cones::{Layout, Point};
use super::{ConeProgram, ConstraintKind, Domain};

#[derive(Debug)]
pub(crate) enum Structural {
    /// An equality reduced to `0 = b` with `b ≠ 0`; carries the constraint index.
    Infeasible(usize),
    /// A free scalar appears only in the objective.
    Unbounded(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Free,
    NonNeg,
    Soc,
}

#[derive(Debug, Clone)]
struct Row {
    scalars: BTreeMap<usize, f64>,
    blocks: Vec<Vec<(f64, DVector<f64>)>>,
    rhs: f64,
    origin: usize,
}

impl Row {
    fn empty(n_blocks: usize, origin: usize) -> Self {
        Self {
            scalars: BTreeMap::new(),
            blocks: vec![Vec::new(); n_blocks],
            rhs: 0.0,
            origin,
        }
    }

    fn add_scalar(&mut self, col: usize, v: f64) {
        *self.scalars.entry(col).or_insert(0.0) += v;
    }

    /// `self -= k * other`, dropping column `pivot_col` from `self`.
    fn eliminate(&mut self, k: f64, other: &Row, pivot_col: usize) {
        for (&j, &v) in &other.scalars {
            if j != pivot_col {
                self.add_scalar(j, -k * v);
            }
        }
        self.scalars.remove(&pivot_col);
        self.scalars.retain(|_, v| *v != 0.0);
        for (mine, theirs) in self.blocks.iter_mut().zip(&other.blocks) {
            mine.extend(theirs.iter().map(|(w, y)| (-k * w, y.clone())));
        }
        self.rhs -= k * other.rhs;
    }

    fn is_empty(&self) -> bool {
        self.scalars.values().all(|v| *v == 0.0) && self.blocks.iter().all(|b| b.is_empty())
    }

    fn norm(&self) -> f64 {
        let mut acc: f64 = self.scalars.values().map(|v| v * v).sum();
        for terms in &self.blocks {
            for (wa, a) in terms {
                for (wb, b) in terms {
                    acc += wa * wb * a.dot(b).powi(2);
                }
            }
        }
        acc.max(0.0).sqrt()
    }

    fn scale(&mut self, k: f64) {
        for v in self.scalars.values_mut() {
            *v *= k;
        }
        for terms in &mut self.blocks {
            for (w, _) in terms.iter_mut() {
                *w *= k;
            }
        }
        self.rhs *= k;
    }
}

#[derive(Debug, Clone)]
struct Pivot {
    col: usize,
    row: Row,
}

/// Low-rank coefficients of one PSD block across all rows: row
/// `rows[k]` contains `weights[k] · vecs[:,k] vecs[:,k]ᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct PsdRows {
    pub vecs: DMatrix<f64>,
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub layout: Layout,
    pub m: usize,
    /// Sparse columns of `A` for the vector part.
    pub cols: Vec<Vec<(usize, f64)>>,
    pub psd: Vec<PsdRows>,
    pub b: DVector<f64>,
    pub c: Point,
    row_origin: Vec<usize>,
    n_scalars: usize,
    /// Standard-form index of every working column that survived.
    std_index: Vec<Option<usize>>,
    pivots: Vec<Pivot>,
    block_dims: Vec<usize>,
}

pub(crate) fn standardize(p: &ConeProgram) -> Result<StandardForm, Structural> {
    let nb = p.blocks.len();
    let mut kinds: Vec<Kind> = p
        .scalars
        .iter()
        .map(|s| match s.domain {
            Domain::Free => Kind::Free,
            Domain::NonNeg => Kind::NonNeg,
        })
        .collect();
    let mut cones: Vec<Vec<usize>> = Vec::new();
    let mut rows: Vec<Row> = Vec::new();

    let fill = |row: &mut Row, e: &super::AffineExpr| {
        for (v, a) in &e.scalars {
            row.add_scalar(v.0, *a);
        }
        for (b, c) in &e.blocks {
            row.blocks[b.0].extend(c.terms.iter().cloned());
        }
        row.rhs = -e.constant;
    };

    for (ci, c) in p.constraints.iter().enumerate() {
        match &c.kind {
            ConstraintKind::Zero(e) => {
                let mut row = Row::empty(nb, ci);
                fill(&mut row, e);
                rows.push(row);
            }
            ConstraintKind::NonNeg(e) => {
                let mut row = Row::empty(nb, ci);
                fill(&mut row, e);
                kinds.push(Kind::NonNeg);
                row.add_scalar(kinds.len() - 1, -1.0);
                rows.push(row);
            }
            ConstraintKind::Soc(es) => {
                let mut members = Vec::with_capacity(es.len());
                for e in es {
                    let mut row = Row::empty(nb, ci);
                    fill(&mut row, e);
                    kinds.push(Kind::Soc);
                    members.push(kinds.len() - 1);
                    row.add_scalar(kinds.len() - 1, -1.0);
                    rows.push(row);
                }
                cones.push(members);
            }
        }
    }

    let mut objective = Row::empty(nb, usize::MAX);
    fill(&mut objective, &p.objective);
    objective.rhs = -objective.rhs;

    let mut active = vec![true; rows.len()];
    let mut pivots = Vec::new();
    for f in 0..p.scalars.len() {
        if kinds[f] != Kind::Free {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (ri, row) in rows.iter().enumerate() {
            if !active[ri] {
                continue;
            }
            if let Some(&v) = row.scalars.get(&f) {
                if v != 0.0 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((ri, v));
                }
            }
        }
        let Some((pr, a)) = best else {
            if objective.scalars.get(&f).is_some_and(|v| *v != 0.0) {
                return Err(Structural::Unbounded(p.scalars[f].name.clone()));
            }
            let mut row = Row::empty(nb, usize::MAX);
            row.add_scalar(f, 1.0);
            pivots.push(Pivot { col: f, row });
            continue;
        };
        active[pr] = false;
        let prow = rows[pr].clone();
        for (ri, row) in rows.iter_mut().enumerate() {
            if !active[ri] {
                continue;
            }
            if let Some(&v) = row.scalars.get(&f) {
                row.eliminate(v / a, &prow, f);
            }
        }
        if let Some(&v) = objective.scalars.get(&f) {
            // objective constant lives in `rhs` with the opposite sign convention
            objective.eliminate(v / a, &prow, f);
            objective.rhs += 2.0 * (v / a) * prow.rhs;
        }
        pivots.push(Pivot { col: f, row: prow });
    }

    let mut kept = Vec::new();
    for (ri, mut row) in rows.into_iter().enumerate() {
        if !active[ri] {
            continue;
        }
        if row.is_empty() {
            if row.rhs.abs() > 1e-9 {
                return Err(Structural::Infeasible(row.origin));
            }
            continue;
        }
        let n = row.norm();
        if n > 0.0 {
            row.scale(1.0 / n);
        }
        kept.push(row);
    }

    let mut std_index = vec![None; kinds.len()];
    let mut next = 0;
    for (j, k) in kinds.iter().enumerate() {
        if *k == Kind::NonNeg {
            std_index[j] = Some(next);
            next += 1;
        }
    }
    let n_lp = next;
    let mut soc = Vec::with_capacity(cones.len());
    for members in &cones {
        soc.push((next, members.len()));
        for &j in members {
            std_index[j] = Some(next);
            next += 1;
        }
    }
    let layout = Layout {
        n_lp,
        soc,
        psd: p.blocks.iter().map(|b| b.dim).collect(),
    };

    let m = kept.len();
    let mut cols = vec![Vec::new(); next];
    let mut psd_terms: Vec<(Vec<DVector<f64>>, Vec<usize>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new(), Vec::new()); nb];
    let mut b = DVector::zeros(m);
    let mut row_origin = Vec::with_capacity(m);
    for (i, row) in kept.iter().enumerate() {
        for (&j, &v) in &row.scalars {
            let col = std_index[j].expect("free columns are eliminated");
            cols[col].push((i, v));
        }
        for (k, terms) in row.blocks.iter().enumerate() {
            for (w, y) in terms {
                psd_terms[k].0.push(y.clone());
                psd_terms[k].1.push(i);
                psd_terms[k].2.push(*w);
            }
        }
        b[i] = row.rhs;
        row_origin.push(row.origin);
    }
    let psd = psd_terms
        .into_iter()
        .zip(&layout.psd)
        .map(|((vecs, rows, weights), &n)| PsdRows {
            vecs: if vecs.is_empty() {
                DMatrix::zeros(n, 0)
            } else {
                DMatrix::from_columns(&vecs)
            },
            rows,
            weights,
        })
        .collect();

    let mut c = Point::zeros(&layout);
    for (&j, &v) in &objective.scalars {
        if let Some(col) = std_index[j] {
            c.vec[col] += v;
        }
    }
    for (k, terms) in objective.blocks.iter().enumerate() {
        for (w, y) in terms {
            c.mats[k].ger(*w, y, y, 1.0);
        }
    }

    Ok(StandardForm {
        layout,
        m,
        cols,
        psd,
        b,
        c,
        row_origin,
        n_scalars: p.scalars.len(),
        std_index,
        pivots,
        block_dims: p.blocks.iter().map(|b| b.dim).collect(),
    })
}

impl StandardForm {
    pub fn apply_a(&self, x: &Point) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (j, col) in self.cols.iter().enumerate() {
            let xj = x.vec[j];
            if xj != 0.0 {
                for &(i, v) in col {
                    out[i] += v * xj;
                }
            }
        }
        for (k, pr) in self.psd.iter().enumerate() {
            if pr.rows.is_empty() {
                continue;
            }
            let xy = &x.mats[k] * &pr.vecs;
            for (t, (&i, &w)) in pr.rows.iter().zip(&pr.weights).enumerate() {
                out[i] += w * pr.vecs.column(t).dot(&xy.column(t));
            }
        }
        out
    }

    pub fn apply_at(&self, y: &DVector<f64>) -> Point {
        let mut out = Point::zeros(&self.layout);
        for (j, col) in self.cols.iter().enumerate() {
            out.vec[j] = col.iter().map(|&(i, v)| v * y[i]).sum();
        }
        for (k, pr) in self.psd.iter().enumerate() {
            if pr.rows.is_empty() {
                continue;
            }
            let mut scaled = pr.vecs.clone();
            for (t, mut col) in scaled.column_iter_mut().enumerate() {
                col *= pr.weights[t] * y[pr.rows[t]];
            }
            out.mats[k] = &scaled * pr.vecs.transpose();
        }
        out
    }

    pub fn dominant_row(&self, y: &DVector<f64>) -> Option<usize> {
        y.iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| self.row_origin[i])
    }

    /// Maps a standard-form primal point back to program scalars and blocks.
    pub fn recover(&self, x_vec: &DVector<f64>, x_mats: &[DMatrix<f64>]) -> (Vec<f64>, Vec<DMatrix<f64>>) {
        let mut vals: Vec<f64> = self
            .std_index
            .iter()
            .map(|s| s.map_or(0.0, |j| x_vec[j]))
            .collect();
        let blocks: Vec<DMatrix<f64>> = if x_mats.len() == self.block_dims.len() {
            x_mats.to_vec()
        } else {
            self.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect()
        };
        for pv in self.pivots.iter().rev() {
            let a = pv.row.scalars[&pv.col];
            let mut acc = pv.row.rhs;
            for (&j, &v) in &pv.row.scalars {
                if j != pv.col {
                    acc -= v * vals[j];
                }
            }
            for (k, terms) in pv.row.blocks.iter().enumerate() {
                for (w, y) in terms {
                    acc -= w * y.dot(&(&blocks[k] * y));
                }
            }
            vals[pv.col] = acc / a;
        }
        vals.truncate(self.n_scalars);
        (vals, blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{AffineExpr, ConstraintLabel, LowRankSym};

    #[test]
    fn free_variables_are_eliminated() {
        let mut p = ConeProgram::new();
        let t = p.add_scalar("t", Domain::Free);
        let r = p.add_scalar("r", Domain::Free);
        p.add_constraint(
            ConstraintLabel::new("fix"),
            ConstraintKind::Zero(AffineExpr::var(r).plus_constant(-2.0)),
        );
        p.add_constraint(
            ConstraintLabel::new("cone"),
            ConstraintKind::Soc(vec![AffineExpr::var(t), AffineExpr::var(r)]),
        );
        p.set_objective(AffineExpr::var(t));
        let f = standardize(&p).unwrap();
        assert_eq!(f.layout.n_lp, 0);
        assert_eq!(f.layout.soc, vec![(0, 2)]);
        // z = (t, r): with z0 = 2 (any) and z1 = 2 the recovery gives t = z0, r = 2
        let (vals, _) = f.recover(&DVector::from_vec(vec![3.0, 2.0]), &[]);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((f.c.vec[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rows_are_normalized() {
        let mut p = ConeProgram::new();
        let b = p.add_block("X", 2);
        p.add_constraint(
            ConstraintLabel::new("trace"),
            ConstraintKind::Zero(AffineExpr::constant(-4.0).plus_block(b, LowRankSym::scaled_identity(2, 2.0))),
        );
        let f = standardize(&p).unwrap();
        let id = Point {
            vec: DVector::zeros(0),
            mats: vec![DMatrix::identity(2, 2)],
        };
        let ax = f.apply_a(&id);
        assert!((ax[0] - 2.0f64.sqrt()).abs() < 1e-12);
        assert!((f.b[0] - 4.0 / 8.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adjoint_is_consistent() {
        let mut p = ConeProgram::new();
        let u = p.add_scalar("u", Domain::NonNeg);
        let b = p.add_block("X", 3);
        let mut c = LowRankSym::new();
        c.push(0.7, DVector::from_vec(vec![1.0, -2.0, 0.5]));
        c.push(-0.3, DVector::from_vec(vec![0.0, 1.0, 1.0]));
        p.add_constraint(
            ConstraintLabel::new("a"),
            ConstraintKind::NonNeg(AffineExpr::var(u).plus_block(b, c).plus_constant(1.0)),
        );
        p.add_constraint(
            ConstraintLabel::new("b"),
            ConstraintKind::Zero(AffineExpr::var(u).plus_block(b, LowRankSym::scaled_identity(3, 1.0))),
        );
        let f = standardize(&p).unwrap();
        let x = Point {
            vec: DVector::from_vec(vec![0.3, 1.7]),
            mats: vec![DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.2, 0.1, 1.0, -0.3, 0.2, -0.3, 0.5])],
        };
        let y = DVector::from_vec(vec![0.4, -1.1]);
        let lhs = f.apply_a(&x).dot(&y);
        let rhs = f.apply_at(&y).dot(&x);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn contradictory_equalities_are_structurally_infeasible() {
        let mut p = ConeProgram::new();
        let x = p.add_scalar("x", Domain::Free);
        p.add_constraint(
            ConstraintLabel::new("one"),
            ConstraintKind::Zero(AffineExpr::var(x).plus_constant(-1.0)),
        );
        p.add_constraint(
            ConstraintLabel::new("two"),
            ConstraintKind::Zero(AffineExpr::var(x).plus_constant(-2.0)),
        );
        assert!(matches!(standardize(&p), Err(Structural::Infeasible(1))));
    }
}
