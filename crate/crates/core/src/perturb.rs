//! Second-order perturbation theory for `q(b)` and drift fields that raise it.

use std::f64::consts::PI;

use serde::Serialize;

use crate::env::{neumaier_sum, DriftField, TorusShape};
use crate::error::{Error, Result};
use crate::lattice::{self, transverse_solve, Kind, OperatorSpec, DEFAULT_TOL};
use crate::par::{self, Exec};
use crate::qcore;

/// A point of the dual grid `xi1 = pi k / L`, `xi_j = 2 pi m_j / L_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mode {
    pub k: usize,
    pub m: Vec<usize>,
    pub xi1: f64,
    pub xi_perp: Vec<f64>,
    pub eigenvalue: f64,
}

/// `2d {cos xi1 - sin^2 xi1 / S} / S` with `S = sum_j (1 - cos xi_j)`.
pub fn mode_eigenvalue(d: usize, xi: &[f64]) -> Result<f64> {
    if xi.len() != d {
        return Err(Error::Shape(format!("xi has {} components, expected {d}", xi.len())));
    }
    let s: f64 = xi.iter().map(|x| 1.0 - x.cos()).sum();
    if s == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let (sin1, cos1) = xi[0].sin_cos();
    Ok(2.0 * d as f64 * (cos1 - sin1 * sin1 / s) / s)
}

fn mode_at(shape: &TorusShape, k: usize, m: Vec<usize>) -> Mode {
    let l = shape.half_len() as f64;
    let xi1 = PI * k as f64 / l;
    let xi_perp: Vec<f64> = m
        .iter()
        .zip(&shape.dims()[1..])
        .map(|(&mj, &lj)| 2.0 * PI * mj as f64 / lj as f64)
        .collect();
    let mut xi = vec![xi1];
    xi.extend(&xi_perp);
    // xi1 lies in (0, pi], so the denominator never vanishes
    let eigenvalue = mode_eigenvalue(shape.dim(), &xi).unwrap_or(f64::NEG_INFINITY);
    Mode {
        k,
        m,
        xi1,
        xi_perp,
        eigenvalue,
    }
}

/// Every mode of the grid, in lexicographic order of `(k, m2, ..., md)`.
pub fn mode_grid(shape: &TorusShape, exec: Exec) -> Vec<Mode> {
    let t = shape.transverse();
    let n_perp = t.len();
    let l = shape.half_len();
    par::map_indexed(exec, l * n_perp, |i| {
        let (k, y) = (i / n_perp + 1, i % n_perp);
        mode_at(shape, k, t.coords(y))
    })
}

/// Modes sorted by eigenvalue, largest first; ties keep lexicographic order.
pub fn scan_modes(shape: &TorusShape, exec: Exec) -> Vec<Mode> {
    let mut modes = mode_grid(shape, exec);
    modes.sort_by(|a, b| b.eigenvalue.total_cmp(&a.eigenvalue));
    modes
}

/// The mode with the largest positive eigenvalue, if any. Among eigenvalues
/// equal to within `1e-12` the lexicographically smallest `(k, m)` wins.
pub fn find_amplifying_mode(shape: &TorusShape) -> Option<Mode> {
    let mut best: Option<Mode> = None;
    for mode in mode_grid(shape, Exec::Sequential) {
        if mode.eigenvalue <= 0.0 {
            continue;
        }
        if best.as_ref().is_none_or(|b| mode.eigenvalue > b.eigenvalue + 1e-12) {
            best = Some(mode);
        }
    }
    best
}

/// Both evaluations of the second-order coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrder {
    /// `1/2d + 2 <phi* psi>_2` from the full-torus quadratic form.
    pub q: f64,
    /// The same from the sine-mode decomposition in `x1`.
    pub q_spectral: f64,
}

/// `(-Delta/2d)^{-1} f` on mean-zero functions of the full torus.
fn inv_laplacian(shape: &TorusShape, f: &[f64]) -> Result<Vec<f64>> {
    let spec = OperatorSpec::full(&DriftField::zero(shape));
    lattice::solve_mean_shifted(&spec, Kind::Generator, 1.0, f, DEFAULT_TOL)
}

/// `[tau_{e1} +- tau_{-e1}] f` on the full torus.
fn shift_sum(shape: &TorusShape, f: &[f64], sign: f64) -> Vec<f64> {
    (0..shape.site_count())
        .map(|i| f[shape.neighbor(i, 0, true)] + sign * f[shape.neighbor(i, 0, false)])
        .collect()
}

fn dot_mean(a: &[f64], b: &[f64]) -> f64 {
    neumaier_sum(a.iter().zip(b).map(|(x, y)| x * y)) / a.len() as f64
}

/// `<b [tau+ + tau-] G b> + 1/2d <b [tau+ - tau-] G [tau+ - tau-] G b>`, `G = (-Delta/2d)^{-1}`.
pub fn phi_star_psi_second_order(b: &DriftField) -> Result<f64> {
    let shape = b.shape();
    let d = shape.dim() as f64;
    let bf = b.full_values();
    let gb = inv_laplacian(shape, &bf)?;
    let first = dot_mean(&bf, &shift_sum(shape, &gb, 1.0));
    let dgb = shift_sum(shape, &gb, -1.0);
    let gdgb = inv_laplacian(shape, &dgb)?;
    let second = dot_mean(&bf, &shift_sum(shape, &gdgb, -1.0)) / (2.0 * d);
    Ok(first + second)
}

/// The same quadratic form through the sine basis `sin(pi k (x1 + 1/2) / L)`.
pub fn phi_star_psi_spectral(b: &DriftField) -> Result<f64> {
    let shape = b.shape();
    let t = shape.transverse();
    let n = t.len();
    let d = shape.dim() as f64;
    let l = shape.half_len();
    let lf = l as f64;
    let coeff = |k: usize| -> Vec<f64> {
        let theta = PI * k as f64 / lf;
        (0..n)
            .map(|y| {
                neumaier_sum((0..l).map(|x1| b.at(x1, y) * (theta * (x1 as f64 + 0.5)).sin()))
            })
            .collect()
    };
    let mut terms = Vec::with_capacity(l);
    let bl = coeff(l);
    let g = transverse_solve(&t, &vec![4.0; n], &bl)?;
    terms.push(-4.0 * d / (lf * lf) * dot_mean(&bl, &g));
    for k in 1..l {
        let theta = PI * k as f64 / lf;
        let c = 2.0 * (1.0 - theta.cos());
        let bk = coeff(k);
        let r = transverse_solve(&t, &vec![c; n], &bk)?;
        let rr = transverse_solve(&t, &vec![c; n], &r)?;
        let s2 = theta.sin().powi(2);
        let inner: Vec<f64> = (0..n).map(|y| theta.cos() * r[y] - 2.0 * s2 * rr[y]).collect();
        terms.push(8.0 * d / (lf * lf) * dot_mean(&bk, &inner));
    }
    Ok(neumaier_sum(terms))
}

/// `q` to second order in `b`, by the direct and the spectral route.
///
/// Fails with [`Error::Disagreement`] if the routes differ by more than `1e-11`.
pub fn q_second_order(b: &DriftField) -> Result<SecondOrder> {
    let w = b.shape().drift_bound();
    let direct = w + 2.0 * phi_star_psi_second_order(b)?;
    let spectral = w + 2.0 * phi_star_psi_spectral(b)?;
    if (direct - spectral).abs() > 1e-11 {
        return Err(Error::Disagreement(format!(
            "second-order forms differ: {direct} vs {spectral}"
        )));
    }
    Ok(SecondOrder {
        q: direct,
        q_spectral: spectral,
    })
}

/// A drift field with `q(b) > 1/2d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub field: DriftField,
    pub q: f64,
    pub amplitude: f64,
    pub mode: Mode,
}

/// Amplitude below which the search gives up.
pub const AMPLITUDE_FLOOR: f64 = 1e-4;

/// Required excess of `q` over `1/2d`.
pub const EXCESS: f64 = 1e-6;

/// Builds `a sin(xi1 (x1 + 1/2)) cos(xi_perp . y)` on the best amplifying mode
/// and evaluates `q` exactly. If `q` does not exceed `1/2d + 1e-6` the
/// amplitude is halved until it does or drops below `1e-4`.
pub fn construct_counterexample(shape: &TorusShape, amplitude: f64) -> Result<Counterexample> {
    let bound = shape.drift_bound();
    if !(amplitude > 0.0 && amplitude < bound) {
        return Err(Error::Amplitude {
            sup: amplitude,
            bound,
        });
    }
    let mode = find_amplifying_mode(shape).ok_or_else(|| Error::NoMode(shape.dims().to_vec()))?;
    let mut a = amplitude;
    while a >= AMPLITUDE_FLOOR {
        let field = DriftField::mode(shape, mode.k, &mode.m, a)?;
        let q = qcore::q_value(&field)?;
        if q > bound + EXCESS {
            return Ok(Counterexample {
                field,
                q,
                amplitude: a,
                mode,
            });
        }
        a /= 2.0;
    }
    Err(Error::SearchFailed {
        floor: AMPLITUDE_FLOOR,
    })
}

/// Greedy sign-flip ascent over vertex fields `b = ±a` seeded by the signs of
/// the counterexample's mode field. Each round applies the single flip with
/// the largest gain in q and stops when no flip improves it.
pub fn refine_counterexample(cx: &Counterexample, amplitude: f64, exec: Exec) -> Result<Counterexample> {
    let shape = cx.field.shape();
    let bound = shape.drift_bound();
    if !(amplitude > 0.0 && amplitude < bound) {
        return Err(Error::Amplitude {
            sup: amplitude,
            bound,
        });
    }
    let mut half: Vec<f64> = cx
        .field
        .half_values()
        .iter()
        .map(|&v| if v < 0.0 { -amplitude } else { amplitude })
        .collect();
    let mut field = DriftField::from_half(shape, half.clone())?;
    let mut q = qcore::q_value(&field)?;
    loop {
        let trials = par::try_map_indexed(exec, half.len(), |i| {
            let mut t = half.clone();
            t[i] = -t[i];
            qcore::q_value(&DriftField::from_half(shape, t)?)
        })?;
        let (best, qb) = trials
            .iter()
            .enumerate()
            .fold((usize::MAX, q), |acc, (i, &v)| if v > acc.1 + 1e-13 { (i, v) } else { acc });
        if best == usize::MAX {
            break;
        }
        half[best] = -half[best];
        field = DriftField::from_half(shape, half.clone())?;
        q = qb;
    }
    if q <= cx.q {
        return Ok(cx.clone());
    }
    Ok(Counterexample {
        field,
        q,
        amplitude,
        mode: cx.mode.clone(),
    })
}

/// Evaluates `q` for the best mode at each amplitude of a grid and returns
/// the counterexample with the largest `q`.
pub fn best_counterexample(
    shape: &TorusShape,
    amplitudes: &[f64],
    exec: Exec,
) -> Result<Counterexample> {
    let mode = find_amplifying_mode(shape).ok_or_else(|| Error::NoMode(shape.dims().to_vec()))?;
    let results = par::try_map_indexed(exec, amplitudes.len(), |i| {
        let field = DriftField::mode(shape, mode.k, &mode.m, amplitudes[i])?;
        let q = qcore::q_value(&field)?;
        Ok::<_, Error>((field, q, amplitudes[i]))
    })?;
    results
        .into_iter()
        .filter(|(_, q, _)| *q > shape.drift_bound() + EXCESS)
        .fold(None::<(DriftField, f64, f64)>, |best, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map(|(field, q, amplitude)| Counterexample {
            field,
            q,
            amplitude,
            mode: mode.clone(),
        })
        .ok_or(Error::SearchFailed {
            floor: amplitudes.iter().copied().fold(f64::INFINITY, f64::min),
        })
}
