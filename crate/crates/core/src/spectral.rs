//! Singular values of quaternion matrices, computed on the complex representation.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cmat::{embed, unembed, CMat};
use crate::error::{Error, Result};
use crate::qmat::QMat;

pub const DEFAULT_POWER_ITERS: usize = 200;
pub const DEFAULT_POWER_SEED: u64 = 42;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
const POWER_RTOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 60;

/// How the initial iterate `X₀ = α·A^H` is scaled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AlphaMode {
    /// `α = 1/σ₁²`, σ₁ estimated by power iteration.
    Spectral,
    /// `α = 1/‖A‖_F²`.
    Frobenius,
    Explicit(f64),
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

impl SvdResult {
    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (k, &s) in self.sigma.iter().enumerate() {
                us[(r, k)] *= s;
            }
        }
        &us * &self.v.adjoint()
    }
}

/// Successive power-iteration estimates of σ₁(embed(A)), one per iteration.
///
/// Each estimate is `‖C^H v‖` for the current unit iterate `v`, which never
/// overshoots σ₁ and never decreases.
pub fn sigma_max_trace(a: &QMat, iters: usize, seed: u64) -> Result<Vec<f64>> {
    if a.frobenius() == 0.0 {
        return Err(Error::ZeroOperator);
    }
    let c = embed(a);
    let ch = c.adjoint();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> = (0..c.rows()).map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    normalize(&mut v);
    let mut trace = Vec::new();
    let mut prev = 0.0;
    for _ in 0..iters.max(1) {
        let w = matvec(&ch, &v);
        let lambda: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        trace.push(lambda.sqrt());
        if (lambda - prev).abs() <= POWER_RTOL * lambda {
            break;
        }
        prev = lambda;
        v = matvec(&c, &w);
        if normalize(&mut v) == 0.0 {
            break;
        }
    }
    Ok(trace)
}

pub fn sigma_max(a: &QMat, iters: usize, seed: u64) -> Result<f64> {
    Ok(*sigma_max_trace(a, iters, seed)?.last().expect("at least one estimate"))
}

pub fn scaling_alpha(a: &QMat, mode: AlphaMode) -> Result<f64> {
    match mode {
        AlphaMode::Spectral => {
            let s = sigma_max(a, DEFAULT_POWER_ITERS, DEFAULT_POWER_SEED)?;
            Ok(1.0 / (s * s))
        }
        AlphaMode::Frobenius => {
            let f = a.frobenius_sqr();
            if f == 0.0 {
                return Err(Error::ZeroOperator);
            }
            Ok(1.0 / f)
        }
        AlphaMode::Explicit(v) if v > 0.0 && v.is_finite() => Ok(v),
        AlphaMode::Explicit(v) => Err(Error::InvalidArgument(format!("alpha must be positive, got {v}"))),
    }
}

fn matvec(m: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    let n = m.cols();
    m.as_slice().chunks_exact(n).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
    n
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// One-sided (Hestenes) Jacobi SVD: `C = U·diag(σ)·V^H` with σ sorted descending.
///
/// The factorization is thin: for `C` of size m×n, `U` is m×k and `V` is n×k
/// with k = min(m, n).
pub fn jacobi_svd(c: &CMat) -> Result<SvdResult> {
    if c.rows() < c.cols() {
        let t = jacobi_svd(&c.adjoint())?;
        return Ok(SvdResult { u: t.v, sigma: t.sigma, v: t.u });
    }
    let (m, n) = c.shape();
    let mut g: Vec<Vec<Complex64>> = (0..n).map(|k| c.column(k)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|k| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[k] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();
    let total = c.frobenius().powi(2);
    let mut converged = n < 2;
    let mut off = 0.0_f64;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm_sqr(&g[p]);
                let beta = norm_sqr(&g[q]);
                let gamma = dot(&g[p], &g[q]);
                let mag = gamma.norm();
                off = off.max(mag);
                if mag == 0.0 || mag <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * mag);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let phase = (gamma / mag).conj();
                rotate(&mut g, p, q, cs, sn, phase);
                rotate(&mut v, p, q, cs, sn, phase);
            }
        }
        converged = !rotated;
    }
    if !converged && off > 1e-12 * total {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS, off_diagonal: off });
    }

    let mut order: Vec<(f64, usize)> = g.iter().enumerate().map(|(k, col)| (norm_sqr(col).sqrt(), k)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sigma: Vec<f64> = order.iter().map(|&(s, _)| s).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let floor = smax * f64::EPSILON * (m.max(n) as f64);

    let mut ucols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &(s, k)) in order.iter().enumerate() {
        if s > floor && s > 0.0 {
            ucols.push(g[k].iter().map(|z| z / s).collect());
        } else {
            ucols.push(Vec::new());
            pending.push(slot);
        }
    }
    complete_basis(&mut ucols, &pending, m);

    let u = CMat::from_fn(m, n, |r, k| ucols[k][r]);
    let vm = CMat::from_fn(n, n, |r, k| v[order[k].1][r]);
    Ok(SvdResult { u, sigma, v: vm })
}

fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (gp, gq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in gp.iter_mut().zip(gq.iter_mut()) {
        let yq = phase * *y;
        let xp = *x;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

/// Fills the empty slots with unit vectors orthogonal to everything else.
/// Each slot takes the coordinate vector with the largest component outside
/// the current span, which is at least `sqrt(remaining / m)`.
fn complete_basis(cols: &mut [Vec<Complex64>], pending: &[usize], m: usize) {
    let project_out = |cols: &[Vec<Complex64>], w: &mut Vec<Complex64>| {
        for _ in 0..2 {
            for col in cols.iter().filter(|c| !c.is_empty()) {
                let h = dot(col, w);
                w.iter_mut().zip(col).for_each(|(a, b)| *a -= h * b);
            }
        }
    };
    for &slot in pending {
        let mut best: Option<(f64, Vec<Complex64>)> = None;
        for candidate in 0..m {
            let mut w = vec![Complex64::new(0.0, 0.0); m];
            w[candidate] = Complex64::new(1.0, 0.0);
            project_out(cols, &mut w);
            let n = norm_sqr(&w);
            if best.as_ref().is_none_or(|(b, _)| n > *b) {
                best = Some((n, w));
            }
        }
        let (_, mut w) = best.expect("m > 0");
        normalize(&mut w);
        // one more pass against the roundoff left by a small leftover
        project_out(cols, &mut w);
        normalize(&mut w);
        cols[slot] = w;
    }
}

/// `A^† = V·Σ^†·U^H` on the complex representation, pulled back to a quaternion matrix.
/// Singular values at or below `rank_tol·σ₁` are treated as zero.
pub fn qsvd_pinv(a: &QMat, rank_tol: f64) -> Result<QMat> {
    let svd = jacobi_svd(&embed(a))?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let mut vs = svd.v.clone();
    for (k, &s) in svd.sigma.iter().enumerate() {
        let inv = if smax > 0.0 && s > rank_tol * smax { 1.0 / s } else { 0.0 };
        for r in 0..vs.rows() {
            vs[(r, k)] *= inv;
        }
    }
    unembed(&(&vs * &svd.u.adjoint()))
}
