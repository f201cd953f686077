//! Discrete operators on the torus and the half torus, with linear solves.
//!
//! The generator acting on `Psi` is
//!
//! ```text
//! (L_zeta + eta) Psi(w) = (1 + eta) Psi(w)
//!     - sum_j 1/2d [e^{-i zeta_j} Psi(w + e_j) + e^{i zeta_j} Psi(w - e_j)]
//!     - b(w) [e^{-i zeta_1} Psi(w + e_1) - e^{i zeta_1} Psi(w - e_1)]
//! ```
//!
//! On the half torus the `e1` neighbors outside `0..L` are ghost cells whose
//! values are fixed by a [`BoundaryKind`]. Every operator is stored as a
//! sparse matrix `A` plus a constant offset `c`, so that the operator maps
//! `v` to `A v + c`; the offset is nonzero only for the inhomogeneous
//! boundary condition.

use std::any::Any;
use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use crate::env::{DriftField, TransverseField, TransverseTorus};
use crate::error::{Error, Result};

/// Systems with at most this many unknowns are factorized densely.
pub const DENSE_LIMIT: usize = 10_000;

/// Default residual tolerance for solves.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Scalar types the operators are assembled over.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    /// `e^{i theta}`. The real implementation only admits `theta = 0`.
    fn phase(theta: f64) -> Self;
    fn lift(x: f64) -> Self;
    fn magnitude(self) -> f64;
}

impl Scalar for f64 {
    fn phase(theta: f64) -> Self {
        debug_assert_eq!(theta, 0.0);
        theta.cos()
    }
    fn lift(x: f64) -> Self {
        x
    }
    fn magnitude(self) -> f64 {
        f64::abs(self)
    }
}

impl Scalar for Complex64 {
    fn phase(theta: f64) -> Self {
        Complex64::from_polar(1.0, theta)
    }
    fn lift(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Ghost-cell rule at the `x1` faces of the half torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    /// `Psi(-1) = -Psi(0)`, `Psi(L) = -Psi(L-1)`.
    Antisymmetric,
    /// `Psi(-1) = Psi(0)`, `Psi(L) = Psi(L-1)`.
    Symmetric,
    /// `Psi(-1) = -Psi(0)`, `Psi(L) = 1 - Psi(L-1)`.
    AntisymmetricInhomogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    FullTorus,
    HalfTorus(BoundaryKind),
}

/// Which operator of a spec to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Generator,
    Adjoint,
}

/// Full description of a generator: drift, domain, twist `zeta` and shift `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub drift: DriftField,
    pub domain: Domain,
    pub zeta: Vec<f64>,
    pub eta: f64,
}

impl OperatorSpec {
    pub fn full(drift: &DriftField) -> Self {
        Self {
            zeta: vec![0.0; drift.dim()],
            drift: drift.clone(),
            domain: Domain::FullTorus,
            eta: 0.0,
        }
    }

    pub fn half(drift: &DriftField, bc: BoundaryKind) -> Self {
        Self {
            zeta: vec![0.0; drift.dim()],
            drift: drift.clone(),
            domain: Domain::HalfTorus(bc),
            eta: 0.0,
        }
    }

    pub fn with_zeta(mut self, zeta: &[f64]) -> Self {
        self.zeta = zeta.to_vec();
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        let s = self.drift.shape();
        match self.domain {
            Domain::FullTorus => s.site_count(),
            Domain::HalfTorus(_) => s.half_site_count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_real(&self) -> bool {
        self.zeta.iter().all(|&z| z == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.drift.dim();
        if self.zeta.len() != d {
            return Err(Error::Shape(format!(
                "zeta has {} components, expected {d}",
                self.zeta.len()
            )));
        }
        let pi = std::f64::consts::PI;
        if self.zeta.iter().any(|z| !(z.abs() <= pi)) {
            return Err(Error::Invalid("zeta components must lie in [-pi, pi]".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Invalid(format!("eta must be >= 0, got {}", self.eta)));
        }
        if matches!(self.domain, Domain::HalfTorus(_)) && !self.is_real() {
            return Err(Error::Invalid("the half-torus operator requires zeta = 0".into()));
        }
        Ok(())
    }

    fn cache_key(&self, kind: Kind, mean_shift: f64, scalar: &'static str) -> u64 {
        let mut h = DefaultHasher::new();
        self.drift.digest().hash(&mut h);
        self.domain.hash(&mut h);
        kind.hash(&mut h);
        for z in &self.zeta {
            z.to_bits().hash(&mut h);
        }
        self.eta.to_bits().hash(&mut h);
        mean_shift.to_bits().hash(&mut h);
        scalar.hash(&mut h);
        h.finish()
    }
}

/// Compressed sparse rows with an optional rank-one term `sigma * mean(v)`
/// added to every entry of the product.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    indptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    mean_shift: f64,
}

impl<T: Scalar> SparseMatrix<T> {
    fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            indptr.push(cols.len());
        }
        Self {
            n,
            indptr,
            cols,
            vals,
            mean_shift: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Adds `sigma P` where `P v = mean(v) 1`.
    pub fn with_mean_shift(mut self, sigma: f64) -> Self {
        self.mean_shift = sigma;
        self
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        let shift = if self.mean_shift != 0.0 {
            let s = v.iter().fold(T::zero(), |a, &x| a + x);
            s * T::lift(self.mean_shift / self.n as f64)
        } else {
            T::zero()
        };
        (0..self.n)
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1])
                    .fold(shift, |acc, k| acc + self.vals[k] * v[self.cols[k]])
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let fill = T::lift(self.mean_shift / self.n as f64);
        let mut m = DMatrix::from_element(self.n, self.n, fill);
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.cols[k])] += self.vals[k];
            }
        }
        m
    }
}

/// An assembled affine operator `v -> A v + offset`.
#[derive(Debug, Clone)]
pub struct Assembled<T> {
    pub matrix: SparseMatrix<T>,
    pub offset: Vec<T>,
}

/// Assembles the generator or its adjoint for `spec`.
pub fn assemble<T: Scalar>(spec: &OperatorSpec, kind: Kind) -> Result<Assembled<T>> {
    spec.validate()?;
    if std::mem::size_of::<T>() == std::mem::size_of::<f64>() && !spec.is_real() {
        return Err(Error::Invalid("nonzero zeta requires complex arithmetic".into()));
    }
    let b = &spec.drift;
    let shape = b.shape();
    let t = shape.transverse();
    let d = shape.dim();
    let w = 0.5 / d as f64;
    let (n_x1, bc) = match spec.domain {
        Domain::FullTorus => (shape.l1(), None),
        Domain::HalfTorus(bc) => (shape.half_len(), Some(bc)),
    };
    if kind == Kind::Adjoint && !matches!(bc, None | Some(BoundaryKind::Symmetric)) {
        return Err(Error::Invalid(
            "the adjoint is defined with symmetric boundary conditions".into(),
        ));
    }
    let n_perp = t.len();
    let n = n_x1 * n_perp;
    let mut rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
    let mut offset = vec![T::zero(); n];
    let up = T::phase(-spec.zeta[0]);
    let down = T::phase(spec.zeta[0]);

    for i in 0..n {
        let (x1, y) = (i / n_perp, i % n_perp);
        let mut row: Vec<(usize, T)> = Vec::with_capacity(2 * d + 1);
        row.push((i, T::lift(1.0 + spec.eta)));
        for a in 0..t.dim() {
            let z = spec.zeta[a + 1];
            row.push((x1 * n_perp + t.neighbor(y, a, true), T::phase(-z) * T::lift(-w)));
            row.push((x1 * n_perp + t.neighbor(y, a, false), T::phase(z) * T::lift(-w)));
        }
        let x1s = x1 as isize;
        // coefficients on Psi(x + e1) and Psi(x - e1)
        let (c_up, c_down) = match kind {
            Kind::Generator => {
                let bx = b.at(x1, y);
                (-(w + bx), -(w - bx))
            }
            Kind::Adjoint => (-w + b.at_signed(x1s + 1, y), -w - b.at_signed(x1s - 1, y)),
        };
        let c_up = up * T::lift(c_up);
        let c_down = down * T::lift(c_down);
        match bc {
            None => {
                row.push((((x1 + 1) % n_x1) * n_perp + y, c_up));
                row.push((((x1 + n_x1 - 1) % n_x1) * n_perp + y, c_down));
            }
            Some(bc) => {
                if x1 + 1 < n_x1 {
                    row.push((i + n_perp, c_up));
                } else {
                    match bc {
                        BoundaryKind::Symmetric => row.push((i, c_up)),
                        BoundaryKind::Antisymmetric => row.push((i, -c_up)),
                        BoundaryKind::AntisymmetricInhomogeneous => {
                            row.push((i, -c_up));
                            offset[i] += c_up;
                        }
                    }
                }
                if x1 > 0 {
                    row.push((i - n_perp, c_down));
                } else {
                    match bc {
                        BoundaryKind::Symmetric => row.push((i, c_down)),
                        _ => row.push((i, -c_down)),
                    }
                }
            }
        }
        rows.push(row);
    }
    Ok(Assembled {
        matrix: SparseMatrix::from_rows(rows),
        offset,
    })
}

fn apply<T: Scalar>(spec: &OperatorSpec, kind: Kind, v: &[T]) -> Result<Vec<T>> {
    let op = assemble::<T>(spec, kind)?;
    if v.len() != op.matrix.len() {
        return Err(Error::Shape(format!(
            "field has {} values, operator acts on {}",
            v.len(),
            op.matrix.len()
        )));
    }
    let mut out = op.matrix.matvec(v);
    for (o, c) in out.iter_mut().zip(&op.offset) {
        *o += *c;
    }
    Ok(out)
}

/// `(L + eta) v` for a real spec (`zeta = 0`).
pub fn apply_generator(spec: &OperatorSpec, v: &[f64]) -> Result<Vec<f64>> {
    apply(spec, Kind::Generator, v)
}

/// `(L_zeta + eta) v` over the complex numbers.
pub fn apply_generator_complex(spec: &OperatorSpec, v: &[Complex64]) -> Result<Vec<Complex64>> {
    apply(spec, Kind::Generator, v)
}

/// `(L* + eta) v`; on the half torus the spec must use symmetric boundary conditions.
pub fn apply_adjoint(spec: &OperatorSpec, v: &[f64]) -> Result<Vec<f64>> {
    apply(spec, Kind::Adjoint, v)
}

/// Solves `(L + eta) v = rhs` for a real spec.
pub fn solve(spec: &OperatorSpec, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    solve_kind(spec, Kind::Generator, rhs, tol)
}

/// Solves `(L_zeta + eta) v = rhs` over the complex numbers.
pub fn solve_complex(spec: &OperatorSpec, rhs: &[Complex64], tol: f64) -> Result<Vec<Complex64>> {
    solve_kind(spec, Kind::Generator, rhs, tol)
}

/// Solves `(L* + eta) v = rhs`.
pub fn solve_adjoint(spec: &OperatorSpec, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    solve_kind(spec, Kind::Adjoint, rhs, tol)
}

/// Solves `(op + sigma P) v = rhs` where `P v = mean(v) 1` and `op` is the
/// real generator or adjoint of `spec`. Used for operators whose kernel is
/// the constants (or whose range is orthogonal to them).
pub fn solve_mean_shifted(
    spec: &OperatorSpec,
    kind: Kind,
    sigma: f64,
    rhs: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let op = assemble::<f64>(spec, kind)?;
    if rhs.len() != op.matrix.len() {
        return Err(Error::Shape(format!(
            "right-hand side has {} values, operator acts on {}",
            rhs.len(),
            op.matrix.len()
        )));
    }
    let shifted: Vec<f64> = rhs.iter().zip(&op.offset).map(|(&r, &c)| r - c).collect();
    let key = spec.cache_key(kind, sigma, scalar_name::<f64>());
    solve_sparse(&op.matrix.with_mean_shift(sigma), &shifted, tol, Some(key))
}

fn scalar_name<T: 'static>() -> &'static str {
    std::any::type_name::<T>()
}

fn solve_kind<T: Scalar>(spec: &OperatorSpec, kind: Kind, rhs: &[T], tol: f64) -> Result<Vec<T>> {
    let op = assemble::<T>(spec, kind)?;
    if rhs.len() != op.matrix.len() {
        return Err(Error::Shape(format!(
            "right-hand side has {} values, operator acts on {}",
            rhs.len(),
            op.matrix.len()
        )));
    }
    let shifted: Vec<T> = rhs.iter().zip(&op.offset).map(|(&r, &c)| r - c).collect();
    let key = spec.cache_key(kind, 0.0, scalar_name::<T>());
    solve_sparse(&op.matrix, &shifted, tol, Some(key))
}

/// Solves `A x = rhs`, by cached dense LU for small systems and BiCGStab otherwise.
///
/// The returned solution satisfies `sup|A x - rhs| <= tol (1 + sup|rhs|)`.
pub fn solve_sparse<T: Scalar>(
    a: &SparseMatrix<T>,
    rhs: &[T],
    tol: f64,
    key: Option<u64>,
) -> Result<Vec<T>> {
    let bound = tol * (1.0 + sup_abs(rhs));
    if a.len() <= DENSE_LIMIT {
        let lu = match key {
            Some(k) => cached_lu(k, || a.to_dense()),
            None => Arc::new(a.to_dense().lu()),
        };
        let mut x = lu_solve(&lu, rhs)?;
        // one step of iterative refinement
        for _ in 0..2 {
            let r: Vec<T> = a.matvec(&x).iter().zip(rhs).map(|(&ax, &b)| b - ax).collect();
            if sup_abs(&r) <= bound {
                return Ok(x);
            }
            let dx = lu_solve(&lu, &r)?;
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        let r: Vec<T> = a.matvec(&x).iter().zip(rhs).map(|(&ax, &b)| b - ax).collect();
        let res = sup_abs(&r);
        if res <= bound {
            Ok(x)
        } else {
            Err(Error::Convergence {
                iterations: 2,
                residual: res,
            })
        }
    } else {
        bicgstab(|v| a.matvec(v), rhs, tol, 20 * a.len().max(100))
    }
}

fn lu_solve<T: Scalar>(lu: &LU<T, Dyn, Dyn>, rhs: &[T]) -> Result<Vec<T>> {
    let b = DVector::from_column_slice(rhs);
    let x = lu
        .solve(&b)
        .ok_or_else(|| Error::Singular("zero pivot in LU factorization".into()))?;
    if x.iter().any(|v| !v.magnitude().is_finite()) {
        return Err(Error::Singular("non-finite LU solution".into()));
    }
    Ok(x.iter().copied().collect())
}

pub fn sup_abs<T: Scalar>(v: &[T]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.magnitude()))
}

/// Matrix-free BiCGStab with deterministic iteration order.
pub fn bicgstab<T, F>(op: F, rhs: &[T], tol: f64, max_iter: usize) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> Vec<T>,
{
    let n = rhs.len();
    let bound = tol * (1.0 + sup_abs(rhs));
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x.conjugate() * y);
    let mut x = vec![T::zero(); n];
    let mut r = rhs.to_vec();
    if sup_abs(&r) <= bound {
        return Ok(x);
    }
    let r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let tiny = 1e-300;
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.magnitude() < tiny {
            return Err(Error::Singular(format!("BiCGStab breakdown (rho) at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = op(&p);
        let denom = dot(&r_hat, &v);
        if denom.magnitude() < tiny {
            return Err(Error::Singular(format!("BiCGStab breakdown (alpha) at iteration {it}")));
        }
        alpha = rho / denom;
        let s: Vec<T> = r.iter().zip(&v).map(|(&ri, &vi)| ri - alpha * vi).collect();
        if sup_abs(&s) <= bound {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return verified(&op, x, rhs, bound, it);
        }
        let t = op(&s);
        let tt = dot(&t, &t);
        if tt.magnitude() < tiny {
            return Err(Error::Singular(format!("BiCGStab breakdown (omega) at iteration {it}")));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        if sup_abs(&r) <= bound {
            return verified(&op, x, rhs, bound, it);
        }
    }
    let res = true_residual(&op, &x, rhs);
    Err(Error::Convergence {
        iterations: max_iter,
        residual: res,
    })
}

fn true_residual<T: Scalar, F: Fn(&[T]) -> Vec<T>>(op: &F, x: &[T], rhs: &[T]) -> f64 {
    let ax = op(x);
    ax.iter().zip(rhs).fold(0.0f64, |m, (&a, &b)| m.max((b - a).magnitude()))
}

fn verified<T: Scalar, F: Fn(&[T]) -> Vec<T>>(
    op: &F,
    x: Vec<T>,
    rhs: &[T],
    bound: f64,
    iterations: usize,
) -> Result<Vec<T>> {
    let res = true_residual(op, &x, rhs);
    if res <= bound {
        Ok(x)
    } else {
        Err(Error::Convergence {
            iterations,
            residual: res,
        })
    }
}

struct FactorCache {
    max: usize,
    entries: VecDeque<(u64, Arc<dyn Any + Send + Sync>)>,
}

fn cache() -> &'static Mutex<FactorCache> {
    static CACHE: OnceLock<Mutex<FactorCache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(FactorCache {
            max: 64,
            entries: VecDeque::new(),
        })
    })
}

/// Sets the maximum number of cached factorizations (0 disables caching).
pub fn set_cache_max(max: usize) {
    let mut c = cache().lock().unwrap_or_else(|e| e.into_inner());
    c.max = max;
    while c.entries.len() > max {
        c.entries.pop_front();
    }
}

pub fn cache_len() -> usize {
    cache().lock().unwrap_or_else(|e| e.into_inner()).entries.len()
}

pub fn clear_cache() {
    cache().lock().unwrap_or_else(|e| e.into_inner()).entries.clear();
}

fn cached_lu<T: Scalar>(key: u64, build: impl FnOnce() -> DMatrix<T>) -> Arc<LU<T, Dyn, Dyn>> {
    {
        let c = cache().lock().unwrap_or_else(|e| e.into_inner());
        if let Some((_, hit)) = c.entries.iter().find(|(k, _)| *k == key) {
            if let Ok(lu) = hit.clone().downcast::<LU<T, Dyn, Dyn>>() {
                return lu;
            }
        }
    }
    // factorize outside the lock; concurrent misses compute identical values
    let lu = Arc::new(build().lu());
    let mut c = cache().lock().unwrap_or_else(|e| e.into_inner());
    if c.max > 0 && !c.entries.iter().any(|(k, _)| *k == key) {
        if c.entries.len() >= c.max {
            c.entries.pop_front();
        }
        c.entries.push_back((key, lu.clone() as Arc<dyn Any + Send + Sync>));
    }
    lu
}

/// Dense `-Delta_{d-1}` on the transverse torus.
pub fn neg_laplacian_matrix(t: &TransverseTorus) -> DMatrix<f64> {
    let n = t.len();
    let mut m = DMatrix::zeros(n, n);
    for y in 0..n {
        for a in 0..t.dim() {
            m[(y, y)] += 2.0;
            m[(y, t.neighbor(y, a, true))] -= 1.0;
            m[(y, t.neighbor(y, a, false))] -= 1.0;
        }
    }
    m
}

/// Solves `(-Delta_{d-1} + diag(potential)) w = f` on the transverse torus.
pub fn transverse_solve(t: &TransverseTorus, potential: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    if potential.len() != n || f.len() != n {
        return Err(Error::Shape(format!(
            "transverse solve on {n} sites got potential {} and rhs {}",
            potential.len(),
            f.len()
        )));
    }
    let mut m = neg_laplacian_matrix(t);
    for (y, &p) in potential.iter().enumerate() {
        m[(y, y)] += p;
    }
    let lu = m.clone().lu();
    let x = lu
        .solve(&DVector::from_column_slice(f))
        .ok_or_else(|| Error::Singular("transverse operator is singular".into()))?;
    Ok(x.iter().copied().collect())
}

/// `(-Delta_{d-1} + c)^{-1} f` for `c > 0`.
pub fn inv_shifted_laplacian(f: &TransverseField, c: f64) -> Result<TransverseField> {
    if !(c > 0.0) {
        return Err(Error::Invalid(format!("shift must be positive, got {c}")));
    }
    let t = f.torus();
    let w = transverse_solve(t, &vec![c; t.len()], f.values())?;
    TransverseField::new(t, w)
}

/// Ratio `r in (0, 1)` with `r + 1/r = 6`.
pub fn green_ratio() -> f64 {
    3.0 - 2.0 * std::f64::consts::SQRT_2
}

/// Green's function of `-Delta/4 + 1` on `Z`.
pub fn green_1d(y: i64) -> f64 {
    let r = green_ratio();
    (1.0 - r) / (1.0 + r) * r.powi(y.unsigned_abs().min(i32::MAX as u64) as i32)
}

/// Values entering the three sufficient conditions on `G` for `Q_V >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenConditions {
    /// `(-Delta + 2) G(y)` for `y = 1..=ymax`.
    pub shifted_laplacian: Vec<f64>,
    /// `1 - G(0) - 2 G(1)`, to be below `G(1) / 2`.
    pub defect: f64,
    pub half_g1: f64,
    /// `G(2)`, to be below `G(1) / 5`.
    pub g2: f64,
    pub fifth_g1: f64,
}

impl GreenConditions {
    pub fn holds(&self) -> bool {
        self.shifted_laplacian.iter().all(|&v| v <= 0.0) && self.defect < self.half_g1 && self.g2 < self.fifth_g1
    }
}

pub fn green_conditions(ymax: i64) -> GreenConditions {
    let g = green_1d;
    GreenConditions {
        shifted_laplacian: (1..=ymax).map(|y| 4.0 * g(y) - g(y + 1) - g(y - 1)).collect(),
        defect: 1.0 - g(0) - 2.0 * g(1),
        half_g1: g(1) / 2.0,
        g2: g(2),
        fifth_g1: g(1) / 5.0,
    }
}
