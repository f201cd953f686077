//! Direct checks of the homogenization limit.
//!
//! Two routes: the transition-operator symbol `T_{eta,zeta}(1)` against its
//! small-eps limit, and sup-norm comparison of the lattice resolvent `u_eps`
//! with the homogenized solution `u`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::env::{neumaier_sum, DriftField};
use crate::error::{Error, Result};
use crate::lattice::{self, OperatorSpec, DEFAULT_TOL};
use crate::par::{self, Exec};
use crate::qcore;

/// Quadrature error bound for the homogenized solution.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Decay length, in physical units, used to pad the truncated box.
pub const BOX_K: f64 = 1.0;

/// Default cap on the number of unknowns in one `u_eps` solve.
pub const MAX_UNKNOWNS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SourceKind {
    Gaussian,
}

/// Source term `f(x) = exp(-|x - c|^2 / 2 w^2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub width: f64,
    pub center: Vec<f64>,
}

impl SourceSpec {
    pub fn gaussian(width: f64, center: &[f64]) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Invalid(format!("source width must be > 0, got {width}")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("source center must be a finite d-vector".into()));
        }
        Ok(Self {
            kind: SourceKind::Gaussian,
            width,
            center: center.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        (-r2 / (2.0 * self.width * self.width)).exp()
    }

    pub fn sup(&self) -> f64 {
        1.0
    }

    /// Radius beyond which `f < tol`.
    pub fn support_radius(&self, tol: f64) -> f64 {
        self.width * (2.0 * (1.0 / tol).ln()).max(0.0).sqrt()
    }

    /// `|f^(xi)|` without the phase `e^{-i xi.c}`.
    fn fourier_modulus(&self, xi2: f64) -> f64 {
        let w2 = self.width * self.width;
        (2.0 * PI * w2).powf(self.dim() as f64 / 2.0) * (-0.5 * w2 * xi2).exp()
    }
}

/// Per-eps sup errors with observed orders `log(e_k/e_{k+1}) / log(eps_k/eps_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub observed_orders: Vec<f64>,
}

impl ConvergenceReport {
    fn new(epsilons: Vec<f64>, sup_errors: Vec<f64>) -> Self {
        let observed_orders = epsilons
            .windows(2)
            .zip(sup_errors.windows(2))
            .map(|(e, s)| (s[0] / s[1]).ln() / (e[0] / e[1]).ln())
            .collect();
        Self {
            epsilons,
            sup_errors,
            observed_orders,
        }
    }

    pub fn is_decreasing(&self) -> bool {
        self.sup_errors.windows(2).all(|w| w[1] < w[0])
    }

    /// Smallest ratio `e_k / e_{k+1}` over consecutive entries.
    pub fn min_ratio(&self) -> f64 {
        self.sup_errors
            .windows(2)
            .map(|w| w[0] / w[1])
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Invalid("epsilons must be positive and finite".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("epsilons must be strictly decreasing".into()));
    }
    Ok(())
}

/// `T_{eta,zeta}(1) = eta (L_zeta + eta)^{-1} 1` on the full torus.
#[allow(non_snake_case)]
pub fn apply_T(b: &DriftField, eta: f64, zeta: &[f64]) -> Result<Vec<Complex64>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Invalid(format!("eta must be > 0, got {eta}")));
    }
    let spec = OperatorSpec::full(b).with_zeta(zeta).with_eta(eta);
    spec.validate()?;
    if zeta.iter().all(|&z| z == 0.0) {
        // (L + eta) 1 = eta exactly.
        return Ok(vec![Complex64::new(1.0, 0.0); spec.len()]);
    }
    let rhs = vec![Complex64::new(eta, 0.0); spec.len()];
    lattice::solve_complex(&spec, &rhs, DEFAULT_TOL)
}

/// The small-eps limit `1 / [1 + |xi|^2/2d + 2 xi_1^2 <phi* psi>]`.
pub fn symbol_limit(b: &DriftField, xi: &[f64]) -> Result<f64> {
    let d = b.dim();
    if xi.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: xi.len(),
        });
    }
    let bundle = qcore::correctors(b)?;
    Ok(limit_with(d, qcore::phi_star_psi(&bundle), xi))
}

fn limit_with(d: usize, pp: f64, xi: &[f64]) -> f64 {
    let xi2: f64 = xi.iter().map(|x| x * x).sum();
    1.0 / (1.0 + xi2 / (2 * d) as f64 + 2.0 * xi[0] * xi[0] * pp)
}

/// `sup_omega |T_{eps^2, eps xi}(1) - limit|` for each eps.
pub fn symbol_limit_report(b: &DriftField, xi: &[f64], epsilons: &[f64], exec: Exec) -> Result<ConvergenceReport> {
    check_epsilons(epsilons)?;
    let d = b.dim();
    if xi.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: xi.len(),
        });
    }
    let bundle = qcore::correctors(b)?;
    let limit = limit_with(d, qcore::phi_star_psi(&bundle), xi);
    let errors = par::try_map_indexed(exec, epsilons.len(), |k| {
        let eps = epsilons[k];
        let zeta: Vec<f64> = xi.iter().map(|x| eps * x).collect();
        let t = apply_T(b, eps * eps, &zeta)?;
        Ok::<_, Error>(t.iter().map(|z| (z - limit).norm()).fold(0.0, f64::max))
    })?;
    Ok(ConvergenceReport::new(epsilons.to_vec(), errors))
}

/// Tolerance and size controls for [`solve_u_eps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOptions {
    pub tol: f64,
    pub max_unknowns: usize,
    pub k: f64,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_unknowns: MAX_UNKNOWNS,
            k: BOX_K,
        }
    }
}

/// A cube of lattice points `lower + [0, extent)^d` on `eps Z^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBox {
    pub eps: f64,
    pub lower: Vec<i64>,
    pub extent: usize,
}

impl GridBox {
    /// Box centered on the source, padded by `R(tol) + K ln(1/tol)`.
    pub fn around(f: &SourceSpec, eps: f64, opts: &BoxOptions) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(Error::Invalid(format!("eps must lie in (0, 0.5], got {eps}")));
        }
        let reach = f.support_radius(opts.tol) + opts.k * (1.0 / opts.tol).ln();
        let m = (reach / eps).ceil() as i64;
        let extent = (2 * m + 1) as usize;
        let unknowns = (extent as f64).powi(f.dim() as i32);
        if unknowns > opts.max_unknowns as f64 {
            return Err(Error::Budget(format!(
                "box needs {unknowns:.0} unknowns, cap is {}",
                opts.max_unknowns
            )));
        }
        let lower = f.center.iter().map(|c| (c / eps).round() as i64 - m).collect();
        Ok(Self { eps, lower, extent })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.extent.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.extent == 0
    }

    /// Lattice coordinates of the `i`-th point (first axis slowest).
    pub fn point(&self, mut i: usize) -> Vec<i64> {
        let mut n = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            n[a] = self.lower[a] + (i % self.extent) as i64;
            i /= self.extent;
        }
        n
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        self.point(i).iter().map(|&n| n as f64 * self.eps).collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.extent.pow((self.dim() - 1 - axis) as u32)
    }
}

/// Solution of the lattice equation on a truncated box.
#[derive(Debug, Clone, PartialEq)]
pub struct UEps {
    pub grid: GridBox,
    pub omega: usize,
    pub values: Vec<f64>,
    pub residual: f64,
}

/// Solves `(1 + eps^2) u(x) - sum_j 1/2d [u(x+eps e_j) + u(x-eps e_j)]
/// - b(tau_{x/eps} omega) [u(x+eps e_1) - u(x-eps e_1)] = eps^2 f(x)`
/// with zero exterior values. `omega` is the environment site at `x = 0`.
pub fn solve_u_eps(b: &DriftField, f: &SourceSpec, eps: f64, omega: usize, opts: &BoxOptions) -> Result<UEps> {
    let shape = b.shape();
    let d = shape.dim();
    if d > 2 {
        return Err(Error::Budget(format!("u_eps solves are limited to d <= 2, got d = {d}")));
    }
    if f.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: f.dim(),
        });
    }
    if omega >= shape.site_count() {
        return Err(Error::Invalid(format!("omega = {omega} is not a site of the torus")));
    }
    let grid = GridBox::around(f, eps, opts)?;
    let n = grid.len();
    let w = shape.drift_bound();
    let origin = shape.site(omega);
    let dims = shape.dims();
    let drift: Vec<f64> = (0..n)
        .map(|i| {
            let p = grid.point(i);
            let x: Vec<usize> = p
                .iter()
                .zip(&origin)
                .zip(dims)
                .map(|((&pi, &o), &l)| (pi + o as i64).rem_euclid(l as i64) as usize)
                .collect();
            b.at_index(shape.index(&x))
        })
        .collect();
    let rhs: Vec<f64> = (0..n).map(|i| eps * eps * f.eval(&grid.position(i))).collect();
    let diag = 1.0 + eps * eps;
    let op = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        let e = grid.extent;
        for i in 0..n {
            let mut acc = diag * u[i];
            for a in 0..d {
                let s = grid.stride(a);
                let k = (i / s) % e;
                let up = if k + 1 < e { u[i + s] } else { 0.0 };
                let dn = if k > 0 { u[i - s] } else { 0.0 };
                acc -= w * (up + dn);
                if a == 0 {
                    acc -= drift[i] * (up - dn);
                }
            }
            out[i] = acc;
        }
        out
    };
    let values = if d == 1 {
        thomas(
            &drift.iter().map(|bi| -(w - bi)).collect::<Vec<_>>(),
            diag,
            &drift.iter().map(|bi| -(w + bi)).collect::<Vec<_>>(),
            &rhs,
        )
    } else {
        lattice::bicgstab(op, &rhs, opts.tol, 50 * n.max(100))?
    };
    let r = op(&values);
    let residual = r.iter().zip(&rhs).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
    if residual > opts.tol {
        return Err(Error::Convergence {
            iterations: 0,
            residual,
        });
    }
    Ok(UEps {
        grid,
        omega,
        values,
        residual,
    })
}

/// Tridiagonal solve with constant diagonal.
fn thomas(sub: &[f64], diag: f64, sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut m = diag;
    c[0] = sup[0] / m;
    y[0] = rhs[0] / m;
    for i in 1..n {
        m = diag - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        y[i] = (rhs[i] - sub[i] * y[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    y
}

fn symbol_denominator(q: f64, xi: &[f64]) -> f64 {
    let d = xi.len();
    let rest: f64 = xi[1..].iter().map(|x| x * x).sum();
    1.0 + q * xi[0] * xi[0] + rest / (2 * d) as f64
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("q must be > 0, got {q}")))
    }
}

/// Frequency cutoff beyond which the Gaussian transform is below 1e-18.
fn xi_cutoff(f: &SourceSpec) -> f64 {
    (2.0 * 18.0 * 10f64.ln()).sqrt() / f.width
}

/// `u(x)` for `-q u_11 - sum_{j>=2} u_jj / 2d + u = f`, by trapezoid quadrature
/// of the Fourier integral. The step is halved until successive values agree
/// to [`QUADRATURE_TOL`].
pub fn solve_homogenized(q: f64, f: &SourceSpec, x: &[f64]) -> Result<f64> {
    check_q(q)?;
    let d = f.dim();
    if x.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: x.len(),
        });
    }
    let z: Vec<f64> = x.iter().zip(&f.center).map(|(a, c)| a - c).collect();
    let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let decay = q.max(1.0 / (2 * d) as f64).sqrt();
    // Aliased copies sit at multiples of 2 pi / h away from x.
    let period = 2.0 * (zmax + 10.0 * f.width + 40.0 * decay);
    let mut h = 2.0 * PI / period;
    let cut = xi_cutoff(f);
    let mut prev = trapezoid(q, f, &z, h, cut)?;
    let mut estimate = f64::INFINITY;
    for _ in 0..6 {
        h /= 2.0;
        let next = trapezoid(q, f, &z, h, cut)?;
        estimate = (next - prev).abs();
        prev = next;
        if estimate <= QUADRATURE_TOL {
            return Ok(next);
        }
    }
    Err(Error::Quadrature {
        estimate,
        bound: QUADRATURE_TOL,
    })
}

fn trapezoid(q: f64, f: &SourceSpec, z: &[f64], h: f64, cut: f64) -> Result<f64> {
    let d = z.len();
    let half = (cut / h).ceil() as i64;
    let side = (2 * half + 1) as usize;
    let total = (side as f64).powi(d as i32);
    if total > 5e8 {
        return Err(Error::Budget(format!("quadrature grid of {total:.0} points")));
    }
    let total = total as usize;
    let mut terms = Vec::with_capacity(total);
    let mut xi = vec![0.0; d];
    for mut i in 0..total {
        for a in (0..d).rev() {
            xi[a] = ((i % side) as i64 - half) as f64 * h;
            i /= side;
        }
        let xi2: f64 = xi.iter().map(|v| v * v).sum();
        let phase: f64 = xi.iter().zip(z).map(|(a, b)| a * b).sum();
        terms.push(f.fourier_modulus(xi2) * phase.cos() / symbol_denominator(q, &xi));
    }
    Ok(neumaier_sum(terms.iter().copied()) * (h / (2.0 * PI)).powi(d as i32))
}

/// `u` at every point of `grid`, by one inverse FFT on a periodized lattice
/// whose period is at least twice the box. The aliasing error is estimated
/// by repeating with the period doubled.
pub fn homogenized_on_grid(q: f64, f: &SourceSpec, grid: &GridBox) -> Result<Vec<f64>> {
    check_q(q)?;
    let d = grid.dim();
    if d != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            actual: d,
        });
    }
    // Spectral truncation at |xi| = pi / eps, bounded by the integrand at the
    // cutoff times the volume of the cube it bounds.
    let cut = PI / grid.eps;
    let tail = f.fourier_modulus(cut * cut) * (cut / PI).powi(d as i32);
    let base = (2 * grid.extent).next_power_of_two();
    let a = periodized(q, f, grid, base)?;
    let b = periodized(q, f, grid, 2 * base)?;
    let alias = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let estimate = alias + tail;
    if estimate > QUADRATURE_TOL {
        return Err(Error::Quadrature {
            estimate,
            bound: QUADRATURE_TOL,
        });
    }
    Ok(b)
}

fn periodized(q: f64, f: &SourceSpec, grid: &GridBox, n: usize) -> Result<Vec<f64>> {
    let d = grid.dim();
    let total = n.pow(d as u32);
    if total > 1 << 26 {
        return Err(Error::Budget(format!("FFT grid of {total} points")));
    }
    let eps = grid.eps;
    let dxi = 2.0 * PI / (n as f64 * eps);
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    let mut xi = vec![0.0; d];
    for (idx, slot) in data.iter_mut().enumerate() {
        let mut i = idx;
        for a in (0..d).rev() {
            let k = i % n;
            i /= n;
            let ks = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            xi[a] = ks * dxi;
        }
        let xi2: f64 = xi.iter().map(|v| v * v).sum();
        // Shift so that index 0 of the output is the box corner.
        let shift: f64 = xi
            .iter()
            .zip(&f.center)
            .zip(&grid.lower)
            .map(|((x, c), &l)| x * (l as f64 * eps - c))
            .sum();
        *slot = Complex64::from_polar(f.fourier_modulus(xi2) / symbol_denominator(q, &xi), shift);
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(n);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..d {
        let stride = n.pow((d - 1 - a) as u32);
        for start in 0..total {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for k in 0..n {
                line[k] = data[start + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[start + k * stride] = line[k];
            }
        }
    }
    let scale = (1.0 / (n as f64 * eps)).powi(d as i32);
    Ok((0..grid.len())
        .map(|i| {
            let mut idx = 0;
            let mut r = i;
            let mut mult = 1;
            for _ in 0..d {
                idx += (r % grid.extent) * mult;
                r /= grid.extent;
                mult *= n;
            }
            data[idx].re * scale
        })
        .collect())
}

/// [`convergence_report_with_q`] with `q` from the exact route.
pub fn convergence_report(
    b: &DriftField,
    f: &SourceSpec,
    epsilons: &[f64],
    opts: &BoxOptions,
    exec: Exec,
) -> Result<ConvergenceReport> {
    let q = qcore::q_value(b)?;
    convergence_report_with_q(b, f, epsilons, q, opts, exec)
}

/// `sup_{x, omega} |u_eps(x, omega) - u(x)|` over box points and every
/// environment offset, with `u` computed for the given `q`.
pub fn convergence_report_with_q(
    b: &DriftField,
    f: &SourceSpec,
    epsilons: &[f64],
    q: f64,
    opts: &BoxOptions,
    exec: Exec,
) -> Result<ConvergenceReport> {
    check_epsilons(epsilons)?;
    let sites = b.shape().site_count();
    let mut errors = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let grid = GridBox::around(f, eps, opts)?;
        let u = homogenized_on_grid(q, f, &grid)?;
        let per_omega = par::try_map_indexed(exec, sites, |omega| {
            let ue = solve_u_eps(b, f, eps, omega, opts)?;
            Ok::<_, Error>(ue.values.iter().zip(&u).fold(0.0f64, |m, (a, c)| m.max((a - c).abs())))
        })?;
        errors.push(per_omega.into_iter().fold(0.0, f64::max));
    }
    Ok(ConvergenceReport::new(epsilons.to_vec(), errors))
}
