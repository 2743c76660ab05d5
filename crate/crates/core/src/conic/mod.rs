//! Linear-conic programs over scalar variables and real symmetric PSD blocks.
//!
//! A [`ConeProgram`] minimizes an affine objective subject to affine
//! equalities, affine inequalities (`expr >= 0`) and second-order cone
//! memberships (`expr_0 >= ||(expr_1, ..)||`). Coefficients on PSD blocks are
//! symmetric matrices kept in low-rank form `Σ w_k y_k y_kᵀ`, which is what
//! beampattern and SINR constraints naturally produce and what the native
//! interior-point solver exploits when it forms its Schur complement.
//!
//! Complex Hermitian `M×M` matrices enter through the real embedding
//! `[[Re H, -Im H], [Im H, Re H]]`; see [`embed_hermitian`],
//! [`deembed`] and [`quadratic_form_coefficients`].

mod cones;
mod ipm;
mod presolve;

use std::fmt::{self, Write as _};

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{CMatrix, CVector};

pub use ipm::SolveStats;

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScalarVar(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockVar(pub(crate) usize);

impl ScalarVar {
    pub fn index(self) -> usize {
        self.0
    }
}

impl BlockVar {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Free,
    NonNeg,
}

/// Symmetric coefficient `C = Σ_k w_k y_k y_kᵀ`, paired with a PSD block
/// through `⟨C, X⟩ = Σ_k w_k y_kᵀ X y_k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LowRankSym {
    pub terms: Vec<(f64, DVector<f64>)>,
}

impl LowRankSym {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, weight: f64, v: DVector<f64>) {
        self.terms.push((weight, v));
    }

    /// `Σ_i e_i e_iᵀ` scaled by `weight`.
    pub fn scaled_identity(n: usize, weight: f64) -> Self {
        let mut c = Self::new();
        for i in 0..n {
            c.push(weight, basis(n, i));
        }
        c
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(w, v)| (w * k, v.clone())).collect(),
        }
    }

    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        self.terms.iter().map(|(w, v)| w * v.dot(&(x * v))).sum()
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(n, n);
        for (w, v) in &self.terms {
            c.ger(*w, v, v, 1.0);
        }
        c
    }

    pub fn frobenius_sq(&self) -> f64 {
        let mut acc = 0.0;
        for (wa, a) in &self.terms {
            for (wb, b) in &self.terms {
                acc += wa * wb * a.dot(b).powi(2);
            }
        }
        acc
    }
}

pub(crate) fn basis(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// `constant + Σ a_i x_i + Σ ⟨C_b, X_b⟩`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub scalars: Vec<(ScalarVar, f64)>,
    pub blocks: Vec<(BlockVar, LowRankSym)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn var(v: ScalarVar) -> Self {
        Self::default().plus_scalar(v, 1.0)
    }

    pub fn plus_scalar(mut self, v: ScalarVar, coef: f64) -> Self {
        self.scalars.push((v, coef));
        self
    }

    pub fn plus_block(mut self, b: BlockVar, coef: LowRankSym) -> Self {
        self.blocks.push((b, coef));
        self
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, scalars: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
        self.constant
            + self.scalars.iter().map(|(v, a)| a * scalars[v.0]).sum::<f64>()
            + self
                .blocks
                .iter()
                .map(|(b, c)| c.inner(&blocks[b.0]))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintLabel {
    pub family: &'static str,
    pub index: Option<usize>,
}

impl ConstraintLabel {
    pub fn new(family: &'static str) -> Self {
        Self { family, index: None }
    }

    pub fn indexed(family: &'static str, index: usize) -> Self {
        Self {
            family,
            index: Some(index),
        }
    }
}

impl fmt::Display for ConstraintLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{i}]", self.family),
            None => write!(f, "{}", self.family),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `expr == 0`
    Zero(AffineExpr),
    /// `expr >= 0`
    NonNeg(AffineExpr),
    /// `exprs[0] >= ||exprs[1..]||`
    Soc(Vec<AffineExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: ConstraintLabel,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarInfo {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockInfo {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConeProgram {
    pub scalars: Vec<ScalarInfo>,
    pub blocks: Vec<BlockInfo>,
    pub constraints: Vec<Constraint>,
    pub objective: AffineExpr,
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>, domain: Domain) -> ScalarVar {
        self.scalars.push(ScalarInfo {
            name: name.into(),
            domain,
        });
        ScalarVar(self.scalars.len() - 1)
    }

    /// Adds a PSD-constrained symmetric `dim × dim` block.
    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> BlockVar {
        self.blocks.push(BlockInfo {
            name: name.into(),
            dim,
        });
        BlockVar(self.blocks.len() - 1)
    }

    pub fn add_constraint(&mut self, label: ConstraintLabel, kind: ConstraintKind) {
        self.constraints.push(Constraint { label, kind });
    }

    pub fn set_objective(&mut self, objective: AffineExpr) {
        self.objective = objective;
    }

    pub fn count(&self, family: &str) -> usize {
        self.constraints.iter().filter(|c| c.label.family == family).count()
    }

    fn exprs(&self) -> impl Iterator<Item = &AffineExpr> {
        self.constraints
            .iter()
            .flat_map(|c| match &c.kind {
                ConstraintKind::Zero(e) | ConstraintKind::NonNeg(e) => std::slice::from_ref(e),
                ConstraintKind::Soc(es) => es.as_slice(),
            })
            .chain(std::iter::once(&self.objective))
    }

    /// Every referenced variable is declared and every block coefficient has
    /// the block's dimension.
    pub fn validate(&self) -> Result<(), ConicError> {
        for e in self.exprs() {
            for (v, a) in &e.scalars {
                if v.0 >= self.scalars.len() {
                    return Err(ConicError::Malformed(format!("undeclared scalar #{}", v.0)));
                }
                if !a.is_finite() {
                    return Err(ConicError::Malformed("non-finite coefficient".into()));
                }
            }
            for (b, c) in &e.blocks {
                let Some(info) = self.blocks.get(b.0) else {
                    return Err(ConicError::Malformed(format!("undeclared block #{}", b.0)));
                };
                if c.terms.iter().any(|(w, v)| v.len() != info.dim || !w.is_finite()) {
                    return Err(ConicError::Malformed(format!(
                        "coefficient on block `{}` has the wrong dimension",
                        info.name
                    )));
                }
            }
            if !e.constant.is_finite() {
                return Err(ConicError::Malformed("non-finite constant".into()));
            }
        }
        for c in &self.constraints {
            if let ConstraintKind::Soc(es) = &c.kind {
                if es.is_empty() {
                    return Err(ConicError::Malformed(format!("empty cone in {}", c.label)));
                }
            }
        }
        if self.blocks.iter().any(|b| b.dim == 0) {
            return Err(ConicError::Malformed("zero-sized PSD block".into()));
        }
        Ok(())
    }

    /// Largest violation of any constraint at the given point (0 when
    /// feasible). PSD membership of blocks is not included.
    pub fn max_violation(&self, scalars: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
        let mut worst = 0.0f64;
        for (info, &x) in self.scalars.iter().zip(scalars) {
            if info.domain == Domain::NonNeg {
                worst = worst.max(-x);
            }
        }
        for c in &self.constraints {
            let v = match &c.kind {
                ConstraintKind::Zero(e) => e.eval(scalars, blocks).abs(),
                ConstraintKind::NonNeg(e) => (-e.eval(scalars, blocks)).max(0.0),
                ConstraintKind::Soc(es) => {
                    let head = es[0].eval(scalars, blocks);
                    let tail: f64 = es[1..].iter().map(|e| e.eval(scalars, blocks).powi(2)).sum();
                    (tail.sqrt() - head).max(0.0)
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Largest constant appearing in the constraints; the scale against
    /// which residuals are judged.
    pub fn data_norm(&self) -> f64 {
        self.exprs().map(|e| e.constant.abs()).fold(0.0, f64::max)
    }

    /// Human-readable listing of variables, cones and constraint rows for
    /// cross-checking against external solvers. Block coefficients are
    /// printed densely as upper-triangle `(i,j)=value` entries.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# cone program");
        for (i, s) in self.scalars.iter().enumerate() {
            let _ = writeln!(out, "var x{i} {} {:?}", s.name, s.domain);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "psd X{i} {} dim={}", b.name, b.dim);
        }
        let _ = writeln!(out, "minimize {}", self.expr_text(&self.objective));
        for c in &self.constraints {
            match &c.kind {
                ConstraintKind::Zero(e) => {
                    let _ = writeln!(out, "{}: {} == 0", c.label, self.expr_text(e));
                }
                ConstraintKind::NonNeg(e) => {
                    let _ = writeln!(out, "{}: {} >= 0", c.label, self.expr_text(e));
                }
                ConstraintKind::Soc(es) => {
                    let _ = writeln!(out, "{}: soc dim={}", c.label, es.len());
                    for (k, e) in es.iter().enumerate() {
                        let _ = writeln!(out, "  [{k}] {}", self.expr_text(e));
                    }
                }
            }
        }
        out
    }

    fn expr_text(&self, e: &AffineExpr) -> String {
        let mut s = format!("{}", e.constant);
        for (v, a) in &e.scalars {
            let _ = write!(s, " + {a}*x{}", v.0);
        }
        for (b, c) in &e.blocks {
            let n = self.blocks[b.0].dim;
            let dense = c.to_dense(n);
            let _ = write!(s, " + <X{},{{", b.0);
            let mut first = true;
            for j in 0..n {
                for i in 0..=j {
                    let v = dense[(i, j)];
                    if v.abs() > 1e-15 {
                        let _ = write!(s, "{}({i},{j})={v}", if first { "" } else { " " });
                        first = false;
                    }
                }
            }
            s.push_str("}>");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub relative_gap: f64,
    pub absolute_gap: f64,
    pub infeasibility: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            relative_gap: 1e-8,
            absolute_gap: 1e-8,
            infeasibility: 1e-8,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub scalars: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    pub objective: f64,
    /// Largest violation of the original constraints at the returned point.
    pub max_violation: f64,
    pub stats: SolveStats,
    /// For infeasible programs, the constraint carrying the largest weight
    /// in the Farkas certificate.
    pub dominant_constraint: Option<ConstraintLabel>,
}

impl ConeSolution {
    pub fn scalar(&self, v: ScalarVar) -> f64 {
        self.scalars[v.0]
    }

    pub fn block(&self, b: BlockVar) -> &DMatrix<f64> {
        &self.blocks[b.0]
    }
}

/// Solves `program` with the native homogeneous self-dual interior-point
/// method. Deterministic for identical inputs.
pub fn solve(program: &ConeProgram, tol: &Tolerances) -> Result<ConeSolution, ConicError> {
    program.validate()?;
    let form = match presolve::standardize(program) {
        Ok(f) => f,
        Err(presolve::Structural::Infeasible(origin)) => {
            return Ok(ConeSolution {
                status: SolveStatus::Infeasible,
                scalars: vec![0.0; program.scalars.len()],
                blocks: program.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
                objective: f64::INFINITY,
                max_violation: f64::INFINITY,
                stats: SolveStats::default(),
                dominant_constraint: Some(program.constraints[origin].label.clone()),
            })
        }
        Err(presolve::Structural::Unbounded(name)) => {
            return Err(ConicError::Malformed(format!(
                "free variable `{name}` appears only in the objective"
            )))
        }
    };
    let result = ipm::solve(&form, tol);
    let (scalars, blocks) = form.recover(&result.x_vec, &result.x_mats);
    let objective = program.objective.eval(&scalars, &blocks);
    let max_violation = program.max_violation(&scalars, &blocks);
    let mut status = result.status;
    if status == SolveStatus::Optimal
        && result.stats.inaccurate
        && max_violation > 1e-6 * (1.0 + program.data_norm())
    {
        status = SolveStatus::NumericalFailure;
    }
    let dominant_constraint = if status == SolveStatus::Infeasible {
        form.dominant_row(&result.y)
            .map(|origin| program.constraints[origin].label.clone())
    } else {
        None
    };
    Ok(ConeSolution {
        status,
        scalars,
        blocks,
        objective: if status == SolveStatus::Optimal {
            objective
        } else {
            f64::INFINITY
        },
        max_violation,
        stats: result.stats,
        dominant_constraint,
    })
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]`.
pub fn embed_hermitian(h: &CMatrix) -> Result<DMatrix<f64>, ConicError> {
    let defect = crate::linalg::hermitian_defect(h);
    if defect > 1e-10 {
        return Err(ConicError::NotHermitian(defect));
    }
    let m = h.nrows();
    let mut x = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = h[(i, j)];
            x[(i, j)] = z.re;
            x[(i + m, j + m)] = z.re;
            x[(i, j + m)] = -z.im;
            x[(i + m, j)] = z.im;
        }
    }
    Ok(x)
}

/// Inverse of [`embed_hermitian`]. The two redundant copies of each part are
/// averaged, which also projects any real symmetric matrix onto the image
/// of the embedding; PSD inputs give PSD outputs.
pub fn deembed(x: &DMatrix<f64>) -> CMatrix {
    let m = x.nrows() / 2;
    let mut h = CMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let re = 0.5 * (x[(i, j)] + x[(i + m, j + m)]);
            let im = 0.5 * (x[(i + m, j)] - x[(i, j + m)]);
            h[(i, j)] = Complex::new(re, im);
        }
    }
    crate::linalg::hermitian_part(&h)
}

/// Coefficient `C` with `⟨C, X⟩ = a^H H a` where `H = deembed(X)`:
/// `C = (y1 y1ᵀ + y2 y2ᵀ)/2` with `y1 = [Re a; Im a]`, `y2 = [-Im a; Re a]`.
/// On an exact embedding each of the two quadratic forms already equals
/// `a^H H a`, which is why each carries weight 1/2.
pub fn quadratic_form_coefficients(a: &CVector) -> LowRankSym {
    let m = a.len();
    let y1 = DVector::from_fn(2 * m, |i, _| if i < m { a[i].re } else { a[i - m].im });
    let y2 = DVector::from_fn(2 * m, |i, _| if i < m { -a[i].im } else { a[i - m].re });
    LowRankSym {
        terms: vec![(0.5, y1), (0.5, y2)],
    }
}

/// Coefficient selecting `Tr(H)` from the embedded block (half the real trace).
pub fn trace_coefficients(m: usize) -> LowRankSym {
    LowRankSym::scaled_identity(2 * m, 0.5)
}

/// Coefficient selecting the real diagonal entry `H(k,k)`.
pub fn diagonal_coefficients(k: usize, m: usize) -> LowRankSym {
    LowRankSym {
        terms: vec![(0.5, basis(2 * m, k)), (0.5, basis(2 * m, k + m))],
    }
}
