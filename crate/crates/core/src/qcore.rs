//! The effective diffusion constant `q(b)` and the objects it is built from.
//!
//! Five routes are provided:
//!
//! * [`q_direct`]: `1/2d + 2 <phi* psi>` from the corrector and invariant measure;
//! * [`q_boundary`]: the boundary-layer identity with `psi0`;
//! * [`q_chain`]: the transfer-matrix recurrence over the transverse torus;
//! * [`q_closed_1d`]: product formulas in `d = 1`;
//! * [`q_slab2`] and [`q_slab4`]: resolvent formulas for `L1 = 2` and `L1 = 4`.
//!
//! Half-torus layers are 0-based (`x1 = 0..L`). Where a formula is naturally
//! written with layers `n = 1..L`, layer `n` is `x1 = n - 1`, so
//! `delta_n(y) = 1/2d - b(n - 1, y)` and `delta_bar_n(y) = 1/2d + b(n - 1, y)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{neumaier_sum, DriftField, HalfField, TorusShape, TransverseField};
use crate::error::{Error, Result};
use crate::lattice::{
    self, neg_laplacian_matrix, transverse_solve, BoundaryKind, Kind, OperatorSpec, DEFAULT_TOL,
};
use crate::par::{self, Exec};

/// Agreement threshold between routes.
pub const ROUTE_TOL: f64 = 1e-10;

/// Relative difference with a floor of `1e-14` on the denominator.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-14)
}

fn mean(v: &[f64]) -> f64 {
    neumaier_sum(v.iter().copied()) / v.len() as f64
}

/// Corrector, invariant measure, flux and boundary solution on the half torus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorBundle {
    pub phi: HalfField,
    pub phi_star: HalfField,
    pub psi: HalfField,
    pub psi0: HalfField,
}

/// Solves `L phi = b` on the half torus with antisymmetric boundary conditions.
pub fn corrector_phi(b: &DriftField) -> Result<HalfField> {
    let spec = OperatorSpec::half(b, BoundaryKind::Antisymmetric);
    let phi = lattice::solve(&spec, b.half_values(), DEFAULT_TOL)?;
    HalfField::new(b.shape(), phi)
}

/// Positive solution of `L* phi* = 0` with symmetric boundary conditions and mean 1.
///
/// Solved as `(L* + P) v = 1`, which has the same solution because the range
/// of `L*` is orthogonal to the constants.
pub fn invariant_phi_star(b: &DriftField) -> Result<HalfField> {
    let spec = OperatorSpec::half(b, BoundaryKind::Symmetric);
    let n = b.shape().half_site_count();
    let mut v = lattice::solve_mean_shifted(&spec, Kind::Adjoint, 1.0, &vec![1.0; n], DEFAULT_TOL)?;
    let m = mean(&v);
    for x in &mut v {
        *x /= m;
    }
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    HalfField::new(b.shape(), v)
}

/// `psi = (1/2d + b) phi(x + e1) - (1/2d - b) phi(x - e1)`, with `phi`
/// extended antisymmetrically across the `x1` faces.
pub fn flux_psi(b: &DriftField, phi: &HalfField) -> Result<HalfField> {
    let shape = b.shape();
    if phi.shape() != shape {
        return Err(Error::Shape("phi and b live on different tori".into()));
    }
    let l = shape.half_len();
    let w = shape.drift_bound();
    let psi = (0..shape.half_site_count())
        .map(|i| {
            let (x1, y) = shape.split(i);
            let up = if x1 + 1 < l { phi.at(x1 + 1, y) } else { -phi.at(x1, y) };
            let down = if x1 > 0 { phi.at(x1 - 1, y) } else { -phi.at(x1, y) };
            let bx = b.at(x1, y);
            (w + bx) * up - (w - bx) * down
        })
        .collect();
    HalfField::new(shape, psi)
}

/// Solves `L psi0 = 0` with `psi0(-1) = -psi0(0)` and `psi0(L) = 1 - psi0(L-1)`.
pub fn psi0(b: &DriftField) -> Result<HalfField> {
    let spec = OperatorSpec::half(b, BoundaryKind::AntisymmetricInhomogeneous);
    let n = b.shape().half_site_count();
    let v = lattice::solve(&spec, &vec![0.0; n], DEFAULT_TOL)?;
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    HalfField::new(b.shape(), v)
}

pub fn correctors(b: &DriftField) -> Result<CorrectorBundle> {
    let phi = corrector_phi(b)?;
    let psi = flux_psi(b, &phi)?;
    Ok(CorrectorBundle {
        phi_star: invariant_phi_star(b)?,
        psi0: psi0(b)?,
        phi,
        psi,
    })
}

/// `<phi* psi>` over the half torus.
pub fn phi_star_psi(bundle: &CorrectorBundle) -> f64 {
    let prod: Vec<f64> = bundle
        .phi_star
        .values()
        .iter()
        .zip(bundle.psi.values())
        .map(|(a, c)| a * c)
        .collect();
    mean(&prod)
}

pub fn q_direct_from(b: &DriftField, bundle: &CorrectorBundle) -> f64 {
    b.shape().drift_bound() + 2.0 * phi_star_psi(bundle)
}

/// `q = 1/2d + 2 <phi* psi>`.
pub fn q_direct(b: &DriftField) -> Result<f64> {
    let phi = corrector_phi(b)?;
    let psi = flux_psi(b, &phi)?;
    let phi_star = invariant_phi_star(b)?;
    let prod: Vec<f64> = phi_star.values().iter().zip(psi.values()).map(|(a, c)| a * c).collect();
    Ok(b.shape().drift_bound() + 2.0 * mean(&prod))
}

pub fn q_boundary_from(b: &DriftField, bundle: &CorrectorBundle) -> f64 {
    let shape = b.shape();
    let w = shape.drift_bound();
    let l1 = shape.l1() as f64;
    let terms: Vec<f64> = (0..shape.transverse_len())
        .map(|y| bundle.phi_star.at(0, y) * (w - b.at(0, y)) * bundle.psi0.at(0, y))
        .collect();
    l1 * l1 * neumaier_sum(terms) / shape.half_site_count() as f64
}

/// `q = L1^2 <phi* (1/2d - b) psi0 chi0>` over the half torus, `chi0` the `x1 = 0` layer.
pub fn q_boundary(b: &DriftField) -> Result<f64> {
    let bundle = CorrectorBundle {
        phi: HalfField::new(b.shape(), vec![0.0; b.shape().half_site_count()])?,
        psi: HalfField::new(b.shape(), vec![0.0; b.shape().half_site_count()])?,
        phi_star: invariant_phi_star(b)?,
        psi0: psi0(b)?,
    };
    Ok(q_boundary_from(b, &bundle))
}

/// `delta_n` and `delta_bar_n` on the transverse torus, `n = 1..L`.
fn deltas(b: &DriftField, n: usize) -> (Vec<f64>, Vec<f64>) {
    let w = b.shape().drift_bound();
    let layer = b.layer(n - 1);
    (
        layer.iter().map(|v| w - v).collect(),
        layer.iter().map(|v| w + v).collect(),
    )
}

/// The operators `L_0, ..., L_L` of the chain recurrence, built literally:
/// `L_{k+1} = delta_{k+1}^{-1} [(-Delta/2d + delta_bar_k + delta_{k+1}) L_k - delta_bar_k L_{k-1}]`.
///
/// Entries grow geometrically with `k`; use [`chain_ratios`] for computation.
pub fn chain_operators(b: &DriftField) -> Vec<DMatrix<f64>> {
    let shape = b.shape();
    let t = shape.transverse();
    let n = t.len();
    let lap = neg_laplacian_matrix(&t) / (2.0 * shape.dim() as f64);
    let mut ops = vec![DMatrix::zeros(n, n), DMatrix::identity(n, n)];
    for k in 1..shape.half_len() {
        let (_, dbar_k) = deltas(b, k);
        let (d_next, _) = deltas(b, k + 1);
        let mut m = lap.clone();
        for y in 0..n {
            m[(y, y)] += dbar_k[y] + d_next[y];
        }
        let mut next = &m * &ops[k] - DMatrix::from_diagonal(&DVector::from_vec(dbar_k)) * &ops[k - 1];
        for y in 0..n {
            let s = 1.0 / d_next[y];
            next.row_mut(y).scale_mut(s);
        }
        ops.push(next);
    }
    ops
}

/// The ratios `A_k = L_{k-1} L_k^{-1}` for `k = 1..L`, from
/// `A_1 = 0` and `A_{k+1} = [-Delta/2d + delta_bar_k + delta_{k+1} - delta_bar_k A_k]^{-1} delta_{k+1}`.
pub fn chain_ratios(b: &DriftField) -> Result<Vec<DMatrix<f64>>> {
    let shape = b.shape();
    let t = shape.transverse();
    let n = t.len();
    let lap = neg_laplacian_matrix(&t) / (2.0 * shape.dim() as f64);
    let mut a = vec![DMatrix::zeros(n, n)];
    for k in 1..shape.half_len() {
        let (_, dbar_k) = deltas(b, k);
        let (d_next, _) = deltas(b, k + 1);
        let mut m = lap.clone();
        for y in 0..n {
            m[(y, y)] += dbar_k[y] + d_next[y];
        }
        let prev = &a[k - 1];
        for y in 0..n {
            for z in 0..n {
                m[(y, z)] -= dbar_k[y] * prev[(y, z)];
            }
        }
        let rhs = DMatrix::from_diagonal(&DVector::from_vec(d_next));
        let next = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("chain step {} is singular", k + 1)))?;
        a.push(next);
    }
    Ok(a)
}

/// `L_L^{-1} 1 = A_2 A_3 ... A_L 1`.
pub fn chain_inverse_one(b: &DriftField) -> Result<Vec<f64>> {
    let a = chain_ratios(b)?;
    let n = b.shape().transverse_len();
    let mut v = DVector::from_element(n, 1.0);
    for ak in a.iter().skip(1).rev() {
        v = ak * v;
    }
    Ok(v.iter().copied().collect())
}

/// `q = 8 L^2 d <[delta_1 L^{-1} 1] (-Delta + 4)^{-1} [delta_bar_1 L_R^{-1} 1]>`,
/// with `L_R` the chain operator for `-b`.
pub fn q_chain(b: &DriftField) -> Result<f64> {
    let shape = b.shape();
    let t = shape.transverse();
    let d = shape.dim() as f64;
    let l = shape.half_len() as f64;
    let (d1, dbar1) = deltas(b, 1);
    let u = chain_inverse_one(b)?;
    let u_r = chain_inverse_one(&b.reflect())?;
    let left: Vec<f64> = d1.iter().zip(&u).map(|(a, c)| a * c).collect();
    let right: Vec<f64> = dbar1.iter().zip(&u_r).map(|(a, c)| a * c).collect();
    let g = transverse_solve(&t, &vec![4.0; t.len()], &right)?;
    let prod: Vec<f64> = left.iter().zip(&g).map(|(a, c)| a * c).collect();
    Ok(8.0 * l * l * d * mean(&prod))
}

/// `phi*(1) delta_1` and `2 psi0(1)` from the `d = 1` product formulas.
pub fn closed_1d_factors(b: &DriftField) -> Result<(f64, f64)> {
    if b.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            actual: b.dim(),
        });
    }
    let l = b.shape().half_len();
    let delta: Vec<f64> = (0..l).map(|x| 0.5 - b.at(x, 0)).collect();
    let dbar: Vec<f64> = (0..l).map(|x| 0.5 + b.at(x, 0)).collect();
    // sum_r prod_{j<r} p_j prod_{j>r} q_j / prod_j q_j = sum_r (prod_{j<r} p_j/q_j) / q_r
    let ratio_sum = |p: &[f64], q: &[f64]| {
        let mut acc = 1.0;
        let mut terms = Vec::with_capacity(l);
        for r in 0..l {
            terms.push(acc / q[r]);
            acc *= p[r] / q[r];
        }
        neumaier_sum(terms)
    };
    let phi_delta = l as f64 / ratio_sum(&dbar, &delta);
    let two_psi0 = 1.0 / ratio_sum(&delta, &dbar);
    Ok((phi_delta, two_psi0))
}

/// `q = 4 L phi*(1) delta_1 psi0(1)` in `d = 1`.
pub fn q_closed_1d(b: &DriftField) -> Result<f64> {
    let (phi_delta, two_psi0) = closed_1d_factors(b)?;
    Ok(2.0 * b.shape().half_len() as f64 * phi_delta * two_psi0)
}

/// `q = 1/2d - 8d <b (-Delta + 4)^{-1} b>` on the `x1 = 0` layer, for `L1 = 2`.
///
/// Also evaluates `8d <(1/2d - b)(-Delta + 4)^{-1}(1/2d + b)>` and fails
/// with [`Error::Disagreement`] if the two differ by more than `1e-12`.
pub fn q_slab2(b: &DriftField) -> Result<f64> {
    let shape = b.shape();
    if shape.l1() != 2 {
        return Err(Error::Shape(format!("slab formula needs L1 = 2, got {}", shape.l1())));
    }
    let t = shape.transverse();
    let d = shape.dim() as f64;
    let w = shape.drift_bound();
    let b0 = b.layer(0);
    let four = vec![4.0; t.len()];
    let gb = transverse_solve(&t, &four, &b0)?;
    let q = w - 8.0 * d * mean(&b0.iter().zip(&gb).map(|(a, c)| a * c).collect::<Vec<_>>());
    let plus: Vec<f64> = b0.iter().map(|v| w + v).collect();
    let gp = transverse_solve(&t, &four, &plus)?;
    let alt = 8.0 * d * mean(&b0.iter().zip(&gp).map(|(v, c)| (w - v) * c).collect::<Vec<_>>());
    if (q - alt).abs() > 1e-12 {
        return Err(Error::Disagreement(format!("slab forms differ: {q} vs {alt}")));
    }
    Ok(q)
}

/// `V(y) = 2d [b(1, y) - b(0, y)]`, which satisfies `|V| < 2`.
pub fn slab_potential(b: &DriftField) -> Result<TransverseField> {
    let shape = b.shape();
    if shape.l1() < 4 {
        return Err(Error::Shape(format!("V needs L1 >= 4, got {}", shape.l1())));
    }
    let d = shape.dim() as f64;
    let (b0, b1) = (b.layer(0), b.layer(1));
    let v: Vec<f64> = b0.iter().zip(&b1).map(|(x0, x1)| 2.0 * d * (x1 - x0)).collect();
    if let Some(y) = v.iter().position(|x| x.abs() >= 2.0) {
        return Err(Error::Singular(format!("|V| reaches 2 at transverse site {y}")));
    }
    TransverseField::new(&shape.transverse(), v)
}

/// Seeded `(V, Phi)` pair on the transverse torus `dims`: `V` is the slab
/// potential of a uniform drift field on `(4, dims...)` at 0.999 of the bound,
/// `Phi` is uniform on `[-1, 1]`.
pub fn qv_sample(dims: &[usize], seed: u64) -> Result<(TransverseField, TransverseField)> {
    let mut full = vec![4];
    full.extend_from_slice(dims);
    let shape = TorusShape::new(&full)?;
    let b = DriftField::random(&shape, 0.999 * shape.drift_bound(), seed)?;
    let v = slab_potential(&b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let phi = (0..v.values().len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok((v.clone(), TransverseField::new(v.torus(), phi)?))
}

/// Composed-resolvent formula for `L1 = 4`:
/// `q = 2^7 d^3 <{delta [-Delta+2-V]^{-1} eps_bar} (-Delta+4)^{-1} {delta_bar [-Delta+2+V]^{-1} eps}>`
/// with `V = 2d [b(1, .) - b(0, .)]`.
pub fn q_slab4(b: &DriftField) -> Result<f64> {
    let shape = b.shape();
    if shape.l1() != 4 {
        return Err(Error::Shape(format!("slab formula needs L1 = 4, got {}", shape.l1())));
    }
    let t = shape.transverse();
    let d = shape.dim() as f64;
    let w = shape.drift_bound();
    let (b0, b1) = (b.layer(0), b.layer(1));
    let v = slab_potential(b)?.into_values();
    let eps: Vec<f64> = b1.iter().map(|x| w + x).collect();
    let eps_bar: Vec<f64> = b1.iter().map(|x| w - x).collect();
    let minus: Vec<f64> = v.iter().map(|x| 2.0 - x).collect();
    let plus: Vec<f64> = v.iter().map(|x| 2.0 + x).collect();
    let left: Vec<f64> = transverse_solve(&t, &minus, &eps_bar)?
        .iter()
        .zip(&b0)
        .map(|(s, x0)| (w - x0) * s)
        .collect();
    let right: Vec<f64> = transverse_solve(&t, &plus, &eps)?
        .iter()
        .zip(&b0)
        .map(|(s, x0)| (w + x0) * s)
        .collect();
    let g = transverse_solve(&t, &vec![4.0; t.len()], &right)?;
    let q = 128.0 * d * d * d * mean(&left.iter().zip(&g).map(|(a, c)| a * c).collect::<Vec<_>>());
    if shape.dim() == 2 && q > 0.25 + 1e-12 {
        return Err(Error::Disagreement(format!("d = 2, L1 = 4 slab gives q = {q} > 1/4")));
    }
    Ok(q)
}

/// Objects entering the quadratic form `Q_V`.
#[derive(Debug, Clone, PartialEq)]
pub struct QVForm {
    pub v: TransverseField,
    pub u: TransverseField,
    pub f: TransverseField,
    pub w_plus: TransverseField,
    pub w_minus: TransverseField,
}

/// `Q_V(f)` by two equivalent expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct QVValue {
    /// Expression with `<w_- (-Delta + 4) w_+>`.
    pub value: f64,
    /// Expression with `<w_- w_+ (1 + UV)>` and the `U w Delta w` terms.
    pub value_alt: f64,
    pub form: QVForm,
}

fn check_v(v: &TransverseField) -> Result<()> {
    if let Some(y) = v.values().iter().position(|x| !(x.abs() < 2.0)) {
        return Err(Error::Invalid(format!("|V| must stay below 2, violated at site {y}")));
    }
    Ok(())
}

/// Solves `[-Delta + 2 +- V] w_+- = f` and `(-Delta + 4) U = V`, and evaluates `Q_V(f)`.
pub fn qv_form(v: &TransverseField, f: &TransverseField) -> Result<QVValue> {
    let t = v.torus().clone();
    if f.torus() != &t {
        return Err(Error::Shape("V and f live on different tori".into()));
    }
    check_v(v)?;
    let vv = v.values();
    let fv = f.values();
    let plus: Vec<f64> = vv.iter().map(|x| 2.0 + x).collect();
    let minus: Vec<f64> = vv.iter().map(|x| 2.0 - x).collect();
    let wp = transverse_solve(&t, &plus, fv)?;
    let wm = transverse_solve(&t, &minus, fv)?;
    let u = transverse_solve(&t, &vec![4.0; t.len()], vv)?;

    let lap_wp = t.neg_laplacian(&wp);
    let lap_wm = t.neg_laplacian(&wm);
    let damp: Vec<f64> = (0..t.len())
        .map(|y| (2.0 - vv[y].abs()).powi(2) * (wm[y] * wm[y] + wp[y] * wp[y]))
        .collect();
    let damp = mean(&damp) / 8.0;

    let value = mean(&(0..t.len()).map(|y| wm[y] * (lap_wp[y] + 4.0 * wp[y])).collect::<Vec<_>>())
        - 0.5 * mean(&(0..t.len()).map(|y| fv[y] * (wp[y] + wm[y])).collect::<Vec<_>>())
        - mean(&(0..t.len()).map(|y| fv[y] * u[y] * (wp[y] - wm[y])).collect::<Vec<_>>())
        - damp;
    // Delta = -(neg_laplacian)
    let value_alt = 2.0
        * mean(&(0..t.len()).map(|y| wm[y] * wp[y] * (1.0 + u[y] * vv[y])).collect::<Vec<_>>())
        - mean(&(0..t.len()).map(|y| u[y] * wp[y] * lap_wm[y]).collect::<Vec<_>>())
        + mean(&(0..t.len()).map(|y| u[y] * wm[y] * lap_wp[y]).collect::<Vec<_>>())
        - damp;

    let scale = 1.0 + sup(fv).powi(2) + value.abs();
    if (value - value_alt).abs() > 1e-12 * scale {
        return Err(Error::Disagreement(format!(
            "Q_V expressions differ: {value} vs {value_alt}"
        )));
    }
    Ok(QVValue {
        value,
        value_alt,
        form: QVForm {
            v: v.clone(),
            u: TransverseField::new(&t, u)?,
            f: f.clone(),
            w_plus: TransverseField::new(&t, wp)?,
            w_minus: TransverseField::new(&t, wm)?,
        },
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Output of [`lpm_apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct LpmOutput {
    pub w_plus: TransverseField,
    pub w_minus: TransverseField,
    /// `[-Delta + 2 + V] w_+`.
    pub f: TransverseField,
    /// `[-Delta + 2 - V] w_-`; equal to `f`.
    pub f_minus: TransverseField,
}

impl LpmOutput {
    /// `sup |f - f_minus| / (1 + sup |w_+| + sup |w_-|)`: both sides are sums
    /// of terms of size `|w|`, so rounding scales with it.
    pub fn identity_residual(&self) -> f64 {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let diff = self
            .f
            .values()
            .iter()
            .zip(self.f_minus.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        diff / (1.0 + sup(self.w_plus.values()) + sup(self.w_minus.values()))
    }
}

/// `w_+ = (-Delta + 2) Phi / V - Phi`, `w_- = (-Delta + 2) Phi / V + Phi`.
pub fn lpm_apply(v: &TransverseField, phi: &TransverseField) -> Result<LpmOutput> {
    let t = v.torus().clone();
    if phi.torus() != &t {
        return Err(Error::Shape("V and Phi live on different tori".into()));
    }
    if let Some(y) = v.values().iter().position(|&x| x == 0.0) {
        return Err(Error::ZeroV(y));
    }
    let vv = v.values();
    let p = phi.values();
    let lp = t.neg_laplacian(p);
    let base: Vec<f64> = (0..t.len()).map(|y| (lp[y] + 2.0 * p[y]) / vv[y]).collect();
    let wp: Vec<f64> = (0..t.len()).map(|y| base[y] - p[y]).collect();
    let wm: Vec<f64> = (0..t.len()).map(|y| base[y] + p[y]).collect();
    let apply = |w: &[f64], sign: f64| -> Vec<f64> {
        let lw = t.neg_laplacian(w);
        (0..t.len()).map(|y| lw[y] + (2.0 + sign * vv[y]) * w[y]).collect()
    };
    let f = apply(&wp, 1.0);
    let f_minus = apply(&wm, -1.0);
    Ok(LpmOutput {
        w_plus: TransverseField::new(&t, wp)?,
        w_minus: TransverseField::new(&t, wm)?,
        f: TransverseField::new(&t, f)?,
        f_minus: TransverseField::new(&t, f_minus)?,
    })
}

/// `Q_V` evaluated on the localized input `f = [-Delta + 2 + V] L_+ Phi`.
pub fn qv_localized(v: &TransverseField, phi: &TransverseField) -> Result<QVValue> {
    let out = lpm_apply(v, phi)?;
    qv_form(v, &out.f)
}

/// All applicable routes to `q(b)` with the corrector bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct QReport {
    pub q_direct: f64,
    pub q_boundary: f64,
    pub q_chain: f64,
    pub q_closed_1d: Option<f64>,
    pub q_slab2: Option<f64>,
    pub q_slab4: Option<f64>,
    pub max_rel_disagreement: f64,
    pub bundle: CorrectorBundle,
    pub shape: Vec<usize>,
    pub half_values_digest: String,
}

/// Serializable part of a [`QReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QSummary {
    pub q_direct: f64,
    pub q_boundary: f64,
    pub q_chain: f64,
    pub q_closed_1d: Option<f64>,
    pub q_slab2: Option<f64>,
    pub q_slab4: Option<f64>,
    pub max_rel_disagreement: f64,
    pub shape: Vec<usize>,
    pub half_values_digest: String,
}

impl QReport {
    /// Populated route values in a fixed order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.q_direct, self.q_boundary, self.q_chain];
        v.extend(self.q_closed_1d);
        v.extend(self.q_slab2);
        v.extend(self.q_slab4);
        v
    }

    /// The route-independent value reported downstream.
    pub fn q(&self) -> f64 {
        self.q_direct
    }

    /// Fails if the routes disagree beyond [`ROUTE_TOL`] or `q` is not positive.
    pub fn check(&self) -> Result<()> {
        if self.max_rel_disagreement > ROUTE_TOL {
            return Err(Error::Disagreement(format!(
                "max relative disagreement {:e} between routes {:?}",
                self.max_rel_disagreement,
                self.values()
            )));
        }
        if !(self.q_direct >= 1e-12) {
            return Err(Error::Disagreement(format!("q = {} is not positive", self.q_direct)));
        }
        Ok(())
    }

    pub fn summary(&self) -> QSummary {
        QSummary {
            q_direct: self.q_direct,
            q_boundary: self.q_boundary,
            q_chain: self.q_chain,
            q_closed_1d: self.q_closed_1d,
            q_slab2: self.q_slab2,
            q_slab4: self.q_slab4,
            max_rel_disagreement: self.max_rel_disagreement,
            shape: self.shape.clone(),
            half_values_digest: self.half_values_digest.clone(),
        }
    }
}

/// Evaluates every applicable route. The corrector solves and the chain run
/// concurrently under [`Exec::Parallel`]; the result does not depend on it.
pub fn q_report(b: &DriftField, exec: Exec) -> Result<QReport> {
    let shape = b.shape();
    let (bundle, chain) = par::join(exec, || correctors(b), || q_chain(b));
    let bundle = bundle?;
    let q_chain = chain?;
    let q_direct = q_direct_from(b, &bundle);
    let q_boundary = q_boundary_from(b, &bundle);
    let q_closed_1d = if shape.dim() == 1 { Some(q_closed_1d(b)?) } else { None };
    let q_slab2 = if shape.l1() == 2 { Some(q_slab2(b)?) } else { None };
    let q_slab4 = if shape.l1() == 4 { Some(q_slab4(b)?) } else { None };
    let mut report = QReport {
        q_direct,
        q_boundary,
        q_chain,
        q_closed_1d,
        q_slab2,
        q_slab4,
        max_rel_disagreement: 0.0,
        bundle,
        shape: shape.dims().to_vec(),
        half_values_digest: b.digest(),
    };
    let vals = report.values();
    report.max_rel_disagreement = vals
        .iter()
        .flat_map(|a| vals.iter().map(move |c| rel_diff(*a, *c)))
        .fold(0.0, f64::max);
    Ok(report)
}

/// `q(b)` by the direct route, checked against the boundary route.
///
/// Near `q = 0` the direct route suffers cancellation, so an absolute gap
/// below `1e-12` is also accepted.
pub fn q_value(b: &DriftField) -> Result<f64> {
    let bundle = correctors(b)?;
    let q = q_direct_from(b, &bundle);
    let qb = q_boundary_from(b, &bundle);
    if rel_diff(q, qb) > ROUTE_TOL && (q - qb).abs() > 1e-12 {
        return Err(Error::Disagreement(format!("direct {q} vs boundary {qb}")));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{TorusShape, TransverseTorus};

    fn shape(d: &[usize]) -> TorusShape {
        TorusShape::new(d).unwrap()
    }

    #[test]
    fn zero_drift_gives_half_over_d_on_all_routes() {
        for dims in [&[4][..], &[2, 2], &[4, 4], &[6, 2], &[4, 4, 2]] {
            let b = DriftField::zero(&shape(dims));
            let r = q_report(&b, Exec::Sequential).unwrap();
            let target = 0.5 / dims.len() as f64;
            for q in r.values() {
                assert!((q - target).abs() < 1e-12, "{dims:?}: {q}");
            }
            assert!(r.bundle.phi_star.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
            assert!(r.bundle.phi.values().iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn two_site_example() {
        let b = DriftField::from_half(&shape(&[2]), vec![0.2]).unwrap();
        let r = q_report(&b, Exec::Sequential).unwrap();
        for q in r.values() {
            assert!((q - 0.42).abs() < 1e-13, "{q}");
        }
    }

    #[test]
    fn slab_hand_example() {
        let b = DriftField::from_half(&shape(&[2, 2]), vec![0.1, 0.0]).unwrap();
        // 0.25 - 16 * <b G b> with G = [[6,2],[2,6]]/32: <b G b> = 0.01 * 6/32 / 2
        let expect = 0.25 - 16.0 * 0.01 * 6.0 / 32.0 / 2.0;
        assert!((q_slab2(&b).unwrap() - expect).abs() < 1e-15);
        assert!((q_direct(&b).unwrap() - expect).abs() < 1e-13);
        assert!((expect - 0.235).abs() < 1e-12);
    }

    #[test]
    fn psi0_closed_identity_and_b_zero_values() {
        let b = DriftField::zero(&shape(&[6]));
        let p = psi0(&b).unwrap();
        for x in 0..3 {
            assert!((p.at(x, 0) - (2.0 * x as f64 + 1.0) / 12.0).abs() < 1e-14);
        }
        let b = DriftField::random(&shape(&[8, 4]), 0.2, 5).unwrap();
        let bundle = correctors(&b).unwrap();
        let s = b.shape();
        for i in 0..s.half_site_count() {
            let (x1, _) = s.split(i);
            let closed = (2.0 * x1 as f64 + 1.0 + 4.0 * bundle.phi.values()[i]) / (2.0 * s.l1() as f64);
            assert!((bundle.psi0.values()[i] - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_ratios_for_free_walk() {
        let b = DriftField::zero(&shape(&[10]));
        let a = chain_ratios(&b).unwrap();
        for (k, ak) in a.iter().enumerate() {
            let k = k + 1;
            assert!((ak[(0, 0)] - (k as f64 - 1.0) / k as f64).abs() < 1e-15);
        }
        let ops = chain_operators(&b);
        for (k, op) in ops.iter().enumerate() {
            assert!((op[(0, 0)] - k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_ratios_match_literal_recurrence() {
        let b = DriftField::random(&shape(&[10, 3]), 0.2, 8).unwrap();
        let ops = chain_operators(&b);
        let a = chain_ratios(&b).unwrap();
        for k in 2..ops.len() {
            let lit = &ops[k - 1] * ops[k].clone().try_inverse().unwrap();
            assert!((lit - &a[k - 1]).amax() < 1e-10);
        }
    }

    #[test]
    fn lpm_constant_example() {
        let t = TransverseTorus::new(&[3]);
        let v = TransverseField::constant(&t, 1.0);
        let phi = TransverseField::constant(&t, 1.0);
        let out = lpm_apply(&v, &phi).unwrap();
        assert!(out.w_plus.values().iter().all(|x| (x - 1.0).abs() < 1e-15));
        assert!(out.w_minus.values().iter().all(|x| (x - 3.0).abs() < 1e-15));
        assert!(out.f.values().iter().all(|x| (x - 3.0).abs() < 1e-15));
        assert_eq!(out.f.values(), out.f_minus.values());
        let zero_v = TransverseField::new(&t, vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(lpm_apply(&zero_v, &phi), Err(Error::ZeroV(1)));
    }

    #[test]
    fn qv_of_zero_input_is_zero() {
        let t = TransverseTorus::new(&[4]);
        let v = TransverseField::new(&t, vec![0.5, -1.0, 1.5, 0.2]).unwrap();
        let r = qv_form(&v, &TransverseField::constant(&t, 0.0)).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn dimension_and_shape_errors() {
        let b = DriftField::zero(&shape(&[4, 2]));
        assert!(matches!(q_closed_1d(&b), Err(Error::Dimension { .. })));
        assert!(matches!(q_slab2(&b), Err(Error::Shape(_))));
        assert!(q_slab4(&b).is_ok());
        assert!(matches!(q_slab4(&DriftField::zero(&shape(&[6, 2]))), Err(Error::Shape(_))));
    }
}
