//! Monte Carlo estimation of q(b) from the embedded discrete-time chain.
//!
//! Each path starts from the stationary law (the symmetric extension of φ*),
//! runs `steps` jumps, and records its integer displacement. All moments are
//! accumulated in exact integer arithmetic, so the report does not depend on
//! how paths were scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{DriftField, HalfField, TorusShape};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::qcore;

pub const MIN_STEPS: u64 = 1_000;
pub const MIN_PATHS: u64 = 100;

/// Environment site plus integer displacement in Z^d.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkState {
    pub env_site: usize,
    pub displacement: Vec<i64>,
    pub steps: u64,
}

impl WalkState {
    pub fn new(shape: &TorusShape, env_site: usize) -> Self {
        Self {
            env_site,
            displacement: vec![0; shape.dim()],
            steps: 0,
        }
    }
}

/// Decodes `u ∈ [0,1)` into a move `(axis, forward)` at drift value `bx`.
///
/// Intervals are laid out as `+e1, -e1, +e2, -e2, ...` with widths
/// `w + bx, w - bx, w, w, ...`.
pub fn decode_move(d: usize, bx: f64, u: f64) -> (usize, bool) {
    let w = 1.0 / (2 * d) as f64;
    if u < w + bx {
        return (0, true);
    }
    if u < 2.0 * w {
        return (0, false);
    }
    let k = (((u - 2.0 * w) / w) as usize).min((2 * d).saturating_sub(3));
    (1 + k / 2, k.is_multiple_of(2))
}

/// One embedded-chain step.
pub fn step_chain(state: &WalkState, b: &DriftField, u: f64) -> WalkState {
    let shape = b.shape();
    let (axis, forward) = decode_move(shape.dim(), b.at_index(state.env_site), u);
    let mut next = state.clone();
    next.env_site = shape.neighbor(state.env_site, axis, forward);
    next.displacement[axis] += if forward { 1 } else { -1 };
    next.steps += 1;
    next
}

/// Inverse-CDF sampler for the stationary environment law on Ω.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    cdf: Vec<f64>,
}

impl InitialSampler {
    pub fn new(phi_star: &HalfField) -> Result<Self> {
        let weights = phi_star.symmetric_extension();
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0) {
                return Err(Error::NonPositive { index: i, value: w });
            }
            acc += w;
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Draws one stationary starting site, deterministic in `seed`.
pub fn sample_initial(phi_star: &HalfField, seed: u64) -> Result<usize> {
    let sampler = InitialSampler::new(phi_star)?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Per-path RNG: one ChaCha stream per path index under a common seed.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Precomputed transition table for fast simulation.
struct Table {
    d: usize,
    threshold: Vec<f64>,
    neighbors: Vec<usize>,
}

impl Table {
    fn new(b: &DriftField) -> Self {
        let shape = b.shape();
        let d = shape.dim();
        let w = shape.drift_bound();
        let n = shape.site_count();
        let mut neighbors = Vec::with_capacity(n * 2 * d);
        for i in 0..n {
            for axis in 0..d {
                neighbors.push(shape.neighbor(i, axis, true));
                neighbors.push(shape.neighbor(i, axis, false));
            }
        }
        let threshold = (0..n).map(|i| w + b.at_index(i)).collect();
        Self {
            d,
            threshold,
            neighbors,
        }
    }

    fn run(&self, start: usize, steps: u64, rng: &mut ChaCha8Rng, disp: &mut [i64]) {
        let d = self.d;
        let w = 1.0 / (2 * d) as f64;
        let mut site = start;
        for _ in 0..steps {
            let u: f64 = rng.random();
            let slot = if u < self.threshold[site] {
                0
            } else if u < 2.0 * w {
                1
            } else {
                2 + (((u - 2.0 * w) / w) as usize).min((2 * d).saturating_sub(3))
            };
            disp[slot / 2] += 1 - 2 * (slot % 2) as i64;
            site = self.neighbors[site * 2 * d + slot];
        }
    }
}

/// Variance-rate estimate for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diffusivity {
    pub value: f64,
    pub stderr: f64,
}

/// Result of [`estimate_q_mc`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub q_hat: f64,
    pub stderr: f64,
    pub mean_drift: f64,
    pub stderr_drift: f64,
    pub transverse: Vec<Diffusivity>,
    pub steps: u64,
    pub paths: u64,
    pub seed: u64,
}

/// Exact power sums of one displacement coordinate across paths.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    s1: i128,
    s2: i128,
    s3: i128,
    s4: i128,
}

impl Moments {
    fn push(&mut self, x: i64) {
        let x = x as i128;
        self.s1 += x;
        self.s2 += x * x;
        self.s3 += x * x * x;
        self.s4 += x * x * x * x;
    }

    /// Sample variance / 2N with a delta-method standard error, plus the
    /// mean displacement per step with its standard error.
    fn summarize(&self, paths: u64, steps: u64) -> (Diffusivity, Diffusivity) {
        let p = paths as f64;
        let m1 = self.s1 as f64 / p;
        let m2 = self.s2 as f64 / p;
        let m3 = self.s3 as f64 / p;
        let m4 = self.s4 as f64 / p;
        let var = (m2 - m1 * m1).max(0.0);
        let s2 = var * p / (p - 1.0);
        // Gradient of g(m1, m2) = m2 - m1^2 is (-2 m1, 1).
        let v11 = var;
        let v12 = m3 - m1 * m2;
        let v22 = (m4 - m2 * m2).max(0.0);
        let gvar = (4.0 * m1 * m1 * v11 - 4.0 * m1 * v12 + v22).max(0.0) / p;
        let n2 = 2.0 * steps as f64;
        let diff = Diffusivity {
            value: s2 / n2,
            stderr: gvar.sqrt() / n2,
        };
        let drift = Diffusivity {
            value: m1 / steps as f64,
            stderr: (s2 / p).sqrt() / steps as f64,
        };
        (diff, drift)
    }
}

/// Estimates q(b) as Var(X₁(N)) / 2N over independent stationary paths.
pub fn estimate_q_mc(b: &DriftField, steps: u64, paths: u64, seed: u64, exec: Exec) -> Result<McReport> {
    if steps < MIN_STEPS || paths < MIN_PATHS {
        return Err(Error::Budget(format!(
            "need steps >= {MIN_STEPS} and paths >= {MIN_PATHS}, got steps = {steps}, paths = {paths}"
        )));
    }
    if steps > i64::MAX as u64 / 2 || paths > usize::MAX as u64 {
        return Err(Error::Budget(format!("steps = {steps}, paths = {paths} overflow")));
    }
    let phi_star = qcore::invariant_phi_star(b)?;
    let sampler = InitialSampler::new(&phi_star)?;
    let table = Table::new(b);
    let d = b.dim();
    let finals = par::map_indexed(exec, paths as usize, |p| {
        let mut rng = path_rng(seed, p as u64);
        let start = sampler.sample(&mut rng);
        let mut disp = vec![0i64; d];
        table.run(start, steps, &mut rng, &mut disp);
        disp
    });
    let mut moments = vec![Moments::default(); d];
    for disp in &finals {
        for (m, &x) in moments.iter_mut().zip(disp) {
            m.push(x);
        }
    }
    let (q, drift) = moments[0].summarize(paths, steps);
    let transverse = moments[1..].iter().map(|m| m.summarize(paths, steps).0).collect();
    Ok(McReport {
        q_hat: q.value,
        stderr: q.stderr,
        mean_drift: drift.value,
        stderr_drift: drift.stderr,
        transverse,
        steps,
        paths,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoding_order() {
        assert_eq!(decode_move(2, 0.0, 0.0), (0, true));
        assert_eq!(decode_move(2, 0.1, 0.3), (0, true));
        assert_eq!(decode_move(2, 0.1, 0.36), (0, false));
        assert_eq!(decode_move(2, 0.0, 0.5), (1, true));
        assert_eq!(decode_move(2, 0.0, 0.75), (1, false));
        assert_eq!(decode_move(2, 0.0, 1.0 - 1e-17), (1, false));
        assert_eq!(decode_move(1, -0.2, 0.4), (0, false));
        assert_eq!(decode_move(3, 0.0, 0.99), (2, false));
    }

    #[test]
    fn step_moves_site_and_displacement_together() {
        let s = TorusShape::new(&[4, 3]).unwrap();
        let b = DriftField::random(&s, 0.2, 1).unwrap();
        let mut st = WalkState::new(&s, 5);
        for u in [0.0, 0.99, 0.6, 0.4, 0.7] {
            let next = step_chain(&st, &b, u);
            let moved: i64 = next.displacement.iter().zip(&st.displacement).map(|(a, b)| (a - b).abs()).sum();
            assert_eq!(moved, 1);
            st = next;
        }
        assert_eq!(st.steps, 5);
        let (x1, y) = s.split(5);
        let expect_x1 = (x1 as i64 + st.displacement[0]).rem_euclid(4) as usize;
        let expect_y = (y as i64 + st.displacement[1]).rem_euclid(3) as usize;
        assert_eq!(s.split(st.env_site), (expect_x1, expect_y));
    }

    #[test]
    fn budget_is_enforced() {
        let b = DriftField::zero(&TorusShape::new(&[4]).unwrap());
        assert!(matches!(estimate_q_mc(&b, 999, 100, 0, Exec::Sequential), Err(Error::Budget(_))));
        assert!(matches!(estimate_q_mc(&b, 1000, 99, 0, Exec::Sequential), Err(Error::Budget(_))));
    }
}
