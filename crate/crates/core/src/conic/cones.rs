//! Cone algebra for the product of a nonnegative orthant, second-order cones
//! and PSD cones: Jordan products, Nesterov-Todd scalings and step lengths.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub n_lp: usize,
    /// `(start, dim)` of each second-order cone inside the vector part.
    pub soc: Vec<(usize, usize)>,
    pub psd: Vec<usize>,
}

impl Layout {
    pub fn n_vec(&self) -> usize {
        self.n_lp + self.soc.iter().map(|(_, d)| d).sum::<usize>()
    }

    /// Barrier degree.
    pub fn degree(&self) -> f64 {
        (self.n_lp + self.soc.len() + self.psd.iter().sum::<usize>()) as f64
    }
}

/// Element of the cone's ambient space: a vector part (orthant followed by
/// second-order cones) and one symmetric matrix per PSD block.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Point {
    pub vec: DVector<f64>,
    pub mats: Vec<DMatrix<f64>>,
}

impl Point {
    pub fn zeros(layout: &Layout) -> Self {
        Self {
            vec: DVector::zeros(layout.n_vec()),
            mats: layout.psd.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
        }
    }

    pub fn identity(layout: &Layout) -> Self {
        let mut p = Self::zeros(layout);
        p.vec.rows_mut(0, layout.n_lp).fill(1.0);
        for &(start, _) in &layout.soc {
            p.vec[start] = 1.0;
        }
        for m in &mut p.mats {
            m.fill_with_identity();
        }
        p
    }

    pub fn dot(&self, o: &Point) -> f64 {
        self.vec.dot(&o.vec) + self.mats.iter().zip(&o.mats).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axpy(&mut self, a: f64, o: &Point) {
        self.vec.axpy(a, &o.vec, 1.0);
        for (m, om) in self.mats.iter_mut().zip(&o.mats) {
            *m += om * a;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.vec *= a;
        for m in &mut self.mats {
            *m *= a;
        }
    }

    pub fn symmetrize(&mut self) {
        for m in &mut self.mats {
            let t = m.transpose();
            *m += t;
            *m *= 0.5;
        }
    }
}

fn jnorm(x: &DVector<f64>) -> f64 {
    let tail = x.rows(1, x.len() - 1).norm_squared();
    (x[0] * x[0] - tail).max(0.0).sqrt()
}

fn apply_j(x: &DVector<f64>) -> DVector<f64> {
    let mut y = -x.clone();
    y[0] = x[0];
    y
}

#[derive(Debug, Clone)]
struct SocScaling {
    beta: f64,
    v: DVector<f64>,
}

impl SocScaling {
    /// `W p = β (2 v vᵀ p − J p)`.
    fn w(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = self.v.clone() * (2.0 * self.v.dot(p));
        out -= apply_j(p);
        out * self.beta
    }

    /// `W⁻¹ p = (2 J v vᵀ J p − J p) / β`.
    fn w_inv(&self, p: &DVector<f64>) -> DVector<f64> {
        let jv = apply_j(&self.v);
        let jp = apply_j(p);
        let mut out = jv * (2.0 * self.v.dot(&jp));
        out -= jp;
        out / self.beta
    }
}

#[derive(Debug, Clone)]
struct PsdScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    /// `R Rᵀ`; the primal-side congruence of `W²`.
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

/// Nesterov-Todd scaling at a strictly feasible pair `(x, s)`:
/// `W⁻¹ x = W s = λ`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    lp_d: DVector<f64>,
    soc: Vec<SocScaling>,
    psd: Vec<PsdScaling>,
    pub lambda: Point,
}

impl Scaling {
    pub fn new(layout: &Layout, x: &Point, s: &Point) -> Option<Self> {
        let n = layout.n_lp;
        let xl = x.vec.rows(0, n);
        let sl = s.vec.rows(0, n);
        if xl.iter().chain(sl.iter()).any(|&v| !(v > 0.0)) {
            return None;
        }
        let lp_d = DVector::from_fn(n, |i, _| (xl[i] / sl[i]).sqrt());
        let mut lambda = Point::zeros(layout);
        for i in 0..n {
            lambda.vec[i] = (xl[i] * sl[i]).sqrt();
        }
        let mut soc = Vec::with_capacity(layout.soc.len());
        for &(start, dim) in &layout.soc {
            let xs = x.vec.rows(start, dim).into_owned();
            let ss = s.vec.rows(start, dim).into_owned();
            let xn = jnorm(&xs);
            let sn = jnorm(&ss);
            if !(xn > 0.0 && sn > 0.0 && xs[0] > 0.0 && ss[0] > 0.0) {
                return None;
            }
            let xb = &xs / xn;
            let sb = &ss / sn;
            let gamma = ((1.0 + xb.dot(&sb)) / 2.0).sqrt();
            let mut v = (xb + apply_j(&sb)) / (2.0 * gamma);
            let w0 = v[0];
            v[0] += 1.0;
            v /= (2.0 * (w0 + 1.0)).sqrt();
            let sc = SocScaling {
                beta: (xn / sn).sqrt(),
                v,
            };
            let l = sc.w(&ss);
            lambda.vec.rows_mut(start, dim).copy_from(&l);
            soc.push(sc);
        }
        let mut psd = Vec::with_capacity(layout.psd.len());
        for (k, _) in layout.psd.iter().enumerate() {
            let lx = Cholesky::new(x.mats[k].clone())?.unpack();
            let ls = Cholesky::new(s.mats[k].clone())?.unpack();
            let prod = ls.transpose() * &lx;
            let svd = SVD::new(prod, true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let sig = svd.singular_values;
            if sig.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            let isq = sig.map(|v| 1.0 / v.sqrt());
            let mut r = lx * vt.transpose();
            for (j, mut col) in r.column_iter_mut().enumerate() {
                col *= isq[j];
            }
            let mut r_inv = u.transpose() * ls.transpose();
            for (i, mut row) in r_inv.row_iter_mut().enumerate() {
                row *= isq[i];
            }
            let w = &r * r.transpose();
            lambda.mats[k] = DMatrix::from_diagonal(&sig);
            psd.push(PsdScaling {
                r,
                r_inv,
                w,
                lambda: sig,
            });
        }
        Some(Self {
            lp_d,
            soc,
            psd,
            lambda,
        })
    }

    fn map(
        &self,
        layout: &Layout,
        p: &Point,
        lp: impl Fn(f64, f64) -> f64,
        soc: impl Fn(&SocScaling, &DVector<f64>) -> DVector<f64>,
        psd: impl Fn(&PsdScaling, &DMatrix<f64>) -> DMatrix<f64>,
    ) -> Point {
        let mut out = Point::zeros(layout);
        for i in 0..layout.n_lp {
            out.vec[i] = lp(self.lp_d[i], p.vec[i]);
        }
        for (sc, &(start, dim)) in self.soc.iter().zip(&layout.soc) {
            let r = soc(sc, &p.vec.rows(start, dim).into_owned());
            out.vec.rows_mut(start, dim).copy_from(&r);
        }
        for (k, sc) in self.psd.iter().enumerate() {
            out.mats[k] = psd(sc, &p.mats[k]);
        }
        out
    }

    /// Primal-side `W` (PSD: `R ξ Rᵀ`).
    pub fn w_primal(&self, layout: &Layout, p: &Point) -> Point {
        self.map(layout, p, |d, v| d * v, |sc, v| sc.w(v), |sc, m| &sc.r * m * sc.r.transpose())
    }

    /// Primal-side `W⁻¹` (PSD: `R⁻¹ Δx R⁻ᵀ`).
    pub fn w_inv_primal(&self, layout: &Layout, p: &Point) -> Point {
        self.map(layout, p, |d, v| v / d, |sc, v| sc.w_inv(v), |sc, m| {
            &sc.r_inv * m * sc.r_inv.transpose()
        })
    }

    /// Dual-side `W` (PSD: `Rᵀ Δs R`).
    pub fn w_dual(&self, layout: &Layout, p: &Point) -> Point {
        self.map(layout, p, |d, v| d * v, |sc, v| sc.w(v), |sc, m| sc.r.transpose() * m * &sc.r)
    }

    /// `W²` mapping dual directions to primal ones (PSD: `w S w`).
    pub fn w2(&self, layout: &Layout, p: &Point) -> Point {
        self.map(layout, p, |d, v| d * d * v, |sc, v| sc.w(&sc.w(v)), |sc, m| &sc.w * m * &sc.w)
    }

    pub fn lp_d2(&self) -> impl Iterator<Item = f64> + '_ {
        self.lp_d.iter().map(|d| d * d)
    }

    /// `(β², v)` for each second-order cone.
    pub fn soc_factors(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.soc.iter().map(|s| (s.beta * s.beta, &s.v))
    }

    pub fn psd_w(&self, k: usize) -> &DMatrix<f64> {
        &self.psd[k].w
    }

    /// Solves `λ ∘ ξ = r` for `ξ`.
    pub fn lambda_div(&self, layout: &Layout, r: &Point) -> Point {
        let mut out = Point::zeros(layout);
        for i in 0..layout.n_lp {
            out.vec[i] = r.vec[i] / self.lambda.vec[i];
        }
        for &(start, dim) in &layout.soc {
            let l = self.lambda.vec.rows(start, dim);
            let rr = r.vec.rows(start, dim);
            let l0 = l[0];
            let l1 = l.rows(1, dim - 1);
            let r1 = rr.rows(1, dim - 1);
            let z0 = (l0 * rr[0] - l1.dot(&r1)) / (l0 * l0 - l1.norm_squared());
            out.vec[start] = z0;
            for i in 1..dim {
                out.vec[start + i] = (rr[i] - z0 * l[i]) / l0;
            }
        }
        for (k, sc) in self.psd.iter().enumerate() {
            let n = sc.lambda.len();
            out.mats[k] = DMatrix::from_fn(n, n, |i, j| {
                2.0 * r.mats[k][(i, j)] / (sc.lambda[i] + sc.lambda[j])
            });
        }
        out
    }
}

/// Jordan product: elementwise on the orthant, `(aᵀb, a₀b₁ + b₀a₁)` on
/// second-order cones and `(AB + BA)/2` on PSD blocks.
pub(crate) fn jordan(layout: &Layout, a: &Point, b: &Point) -> Point {
    let mut out = Point::zeros(layout);
    for i in 0..layout.n_lp {
        out.vec[i] = a.vec[i] * b.vec[i];
    }
    for &(start, dim) in &layout.soc {
        let x = a.vec.rows(start, dim);
        let y = b.vec.rows(start, dim);
        out.vec[start] = x.dot(&y);
        for i in 1..dim {
            out.vec[start + i] = x[0] * y[i] + y[0] * x[i];
        }
    }
    for k in 0..layout.psd.len() {
        let ab = &a.mats[k] * &b.mats[k];
        out.mats[k] = (&ab + ab.transpose()) * 0.5;
    }
    out
}

/// Largest `α` with `x + α d` in the cone (`f64::INFINITY` if unbounded),
/// for `x` in the interior.
pub(crate) fn max_step(layout: &Layout, x: &Point, d: &Point) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..layout.n_lp {
        if d.vec[i] < 0.0 {
            alpha = alpha.min(-x.vec[i] / d.vec[i]);
        }
    }
    for &(start, dim) in &layout.soc {
        let xs = x.vec.rows(start, dim).into_owned();
        let ds = d.vec.rows(start, dim).into_owned();
        let xn = jnorm(&xs);
        if xn <= 0.0 {
            return 0.0;
        }
        let xb = xs / xn;
        let rho0 = xb.dot(&apply_j(&ds)) / xn;
        let xb1 = xb.rows(1, dim - 1);
        let coef = (rho0 * xn + ds[0]) / (xb[0] + 1.0);
        let rho1 = (ds.rows(1, dim - 1) - xb1 * coef) / xn;
        let lim = rho1.norm() - rho0;
        if lim > 0.0 {
            alpha = alpha.min(1.0 / lim);
        }
    }
    for k in 0..layout.psd.len() {
        let Some(chol) = Cholesky::new(x.mats[k].clone()) else {
            return 0.0;
        };
        let l = chol.l();
        let Some(linv) = l.clone().try_inverse() else {
            return 0.0;
        };
        let m = &linv * &d.mats[k] * linv.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let lmin = SymmetricEigen::new(m).eigenvalues.min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}
