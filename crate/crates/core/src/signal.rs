//! Quaternion FIR filter identification on a noisy, delayed Lorenz trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pinv::{Backend, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::qmat::QMat;
use crate::quat::Quat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub delta: f64,
    pub gamma: f64,
    pub y0: [f64; 3],
    pub t_span: (f64, f64),
    pub dt: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams { sigma: 10.0, delta: 8.0 / 3.0, gamma: 28.0, y0: [1.0, 1.0, 1.0], t_span: (0.0, 40.0), dt: 0.01 }
    }
}

impl LorenzParams {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

/// Classical fixed-step RK4 of
/// `u' = σ(v − u)`, `v' = u(γ − w) − v`, `w' = uv − δw`.
pub fn lorenz_integrate(p: &LorenzParams) -> Result<Trajectory> {
    let (t0, t1) = p.t_span;
    if !(p.dt > 0.0) || !(t1 > t0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t1 > t0, got dt={} span=({t0}, {t1})", p.dt)));
    }
    let steps = ((t1 - t0) / p.dt).round() as usize;
    let f = |y: [f64; 3]| -> [f64; 3] {
        [p.sigma * (y[1] - y[0]), y[0] * (p.gamma - y[2]) - y[1], y[0] * y[1] - p.delta * y[2]]
    };
    let axpy = |y: [f64; 3], h: f64, k: [f64; 3]| [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]];
    let mut out = Trajectory {
        t: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
    };
    let mut y = p.y0;
    let h = p.dt;
    for i in 0..=steps {
        out.t.push(t0 + i as f64 * h);
        out.u.push(y[0]);
        out.v.push(y[1]);
        out.w.push(y[2]);
        let k1 = f(y);
        let k2 = f(axpy(y, h / 2.0, k1));
        let k3 = f(axpy(y, h / 2.0, k2));
        let k4 = f(axpy(y, h, k3));
        for d in 0..3 {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
    }
    Ok(out)
}

/// Clean signal `s(t) = u·i + v·j + w·k` and its delayed noisy observation `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalFrame {
    pub t: Vec<f64>,
    pub s: Vec<Quat>,
    pub x: Vec<Quat>,
}

impl SignalFrame {
    /// `x(t) = s(t − τ) + n(t)`, with `τ` in samples (clamped at the start)
    /// and `n` purely imaginary Gaussian noise whose per-channel standard
    /// deviation is `noise_rel` times that channel's RMS.
    pub fn from_trajectory(tr: &Trajectory, tau: usize, noise_rel: f64, seed: u64) -> Result<Self> {
        let n = tr.t.len();
        let s: Vec<Quat> = (0..n).map(|i| Quat::pure(tr.u[i], tr.v[i], tr.w[i])).collect();
        let rms = |c: &[f64]| (c.iter().map(|v| v * v).sum::<f64>() / c.len().max(1) as f64).sqrt();
        let std = [rms(&tr.u), rms(&tr.v), rms(&tr.w)].map(|r| noise_rel * r);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dists = std
            .iter()
            .map(|&sd| Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(format!("noise level: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let x = (0..n)
            .map(|i| {
                let base = s[i.saturating_sub(tau)];
                base + Quat::pure(dists[0].sample(&mut rng), dists[1].sample(&mut rng), dists[2].sample(&mut rng))
            })
            .collect();
        Ok(SignalFrame { t: tr.t.clone(), s, x })
    }
}

/// `X[r][c] = x(t + r − c)` (earlier samples clamped to the first) and the
/// target column `s(t), …, s(t + p)`, for filter order `p` starting at sample `t`.
pub fn build_filter_system(frame: &SignalFrame, p: usize, t: usize) -> Result<(QMat, QMat)> {
    let n = frame.x.len().min(frame.s.len());
    if t + p >= n {
        return Err(Error::InsufficientSamples { needed: t + p + 1, available: n });
    }
    let x = QMat::from_fn(p + 1, p + 1, |r, c| frame.x[(t + r).saturating_sub(c)]);
    let s = QMat::from_fn(p + 1, 1, |r, _| frame.s[t + r]);
    Ok((x, s))
}

/// `h = X^†·s` and the recovery error `‖X·h − s‖ / ‖s‖`.
pub fn solve_filter(x: &QMat, s: &QMat, backend: Backend) -> Result<(QMat, f64)> {
    if x.rows() != s.rows() || s.cols() != 1 {
        return Err(Error::mismatch("solve_filter", x.shape(), s.shape()));
    }
    let xp = backend.pseudo_inverse(x, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    let h = &xp * s;
    let eps = (&(x * &h) - s).frobenius() / s.frobenius();
    Ok((h, eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay() {
        let p = LorenzParams { sigma: 0.0, delta: 1.0, gamma: 0.0, y0: [0.0, 0.0, 1.0], t_span: (0.0, 1.0), dt: 0.01 };
        let tr = lorenz_integrate(&p).unwrap();
        assert!(tr.u.iter().chain(&tr.v).all(|&v| v == 0.0));
        assert!((tr.w.last().unwrap() - (-1f64).exp()).abs() < 1e-6);
        assert!((tr.t.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_stays_put() {
        let p = LorenzParams { y0: [0.0; 3], ..Default::default() };
        let tr = lorenz_integrate(&p).unwrap();
        assert!(tr.u.iter().chain(&tr.v).chain(&tr.w).all(|&v| v == 0.0));
    }

    #[test]
    fn system_layout() {
        let frame = SignalFrame {
            t: (0..6).map(|i| i as f64).collect(),
            s: (0..6).map(|i| Quat::pure(i as f64, 0.0, 0.0)).collect(),
            x: (0..6).map(|i| Quat::pure(0.0, i as f64, 0.0)).collect(),
        };
        let (x, s) = build_filter_system(&frame, 0, 2).unwrap();
        assert_eq!((x[(0, 0)], s[(0, 0)]), (frame.x[2], frame.s[2]));
        let (x, _) = build_filter_system(&frame, 2, 2).unwrap();
        assert_eq!(x[(1, 0)], frame.x[3]);
        assert_eq!(x[(0, 1)], frame.x[1]);
        assert!(matches!(build_filter_system(&frame, 3, 3), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn identity_filter() {
        let q = Quat::pure(0.5, -1.0, 2.0);
        let frame = SignalFrame { t: vec![0.0], s: vec![q], x: vec![q] };
        let (x, s) = build_filter_system(&frame, 0, 0).unwrap();
        let (h, eps) = solve_filter(&x, &s, Backend::Qsvd).unwrap();
        assert!((h[(0, 0)] - Quat::ONE).norm() < 1e-12);
        assert!(eps <= 1e-12);
    }
}
