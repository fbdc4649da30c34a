//! Hyperpower-family iterations for the quaternion Moore–Penrose pseudoinverse.
//!
//! Every method starts from `X₀ = α·A^H` and updates `X_{j+1} = X_j·p(R_j)`
//! with `R_j = I − A·X_j`; the methods differ only in how the residual
//! polynomial `p` is factorized.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{MulTally, QMat};
use crate::spectral::{jacobi_svd, qsvd_pinv, scaling_alpha, DEFAULT_RANK_TOL};

pub use crate::spectral::AlphaMode;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 500;
const STAGNATION_WINDOW: usize = 5;
const STAGNATION_BAND: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Newton–Schulz, order 2.
    Qns,
    /// Generic hyperpower iteration of order `k`.
    Hyperpower(usize),
    /// Divided-difference scheme with `N` nested corrections.
    Qrapid(usize),
    /// Golden-ratio factorization of the order-10 hyperpower polynomial.
    Qsai,
    /// Factorized order-19 hyperpower with seven products.
    Qhpi19,
    /// Unfactorized Horner evaluation of the order-`p` hyperpower polynomial.
    Qhon(usize),
}

impl Method {
    /// Convergence order of the residual map.
    pub fn order(&self) -> usize {
        match *self {
            Method::Qns => 2,
            Method::Hyperpower(k) | Method::Qhon(k) => k,
            Method::Qsai => 10,
            Method::Qhpi19 => 19,
            Method::Qrapid(n) => qrapid_order(n),
        }
    }

    /// Tracked products per iteration.
    pub fn matmuls_per_iter(&self) -> u64 {
        match *self {
            Method::Qns => 2,
            Method::Hyperpower(k) | Method::Qhon(k) => k as u64,
            Method::Qsai => 6,
            Method::Qhpi19 => 7,
            Method::Qrapid(n) => 8 + 2 * n as u64,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Method::Hyperpower(k) | Method::Qhon(k) if k < 2 => {
                Err(Error::InvalidArgument(format!("order parameter must be >= 2, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Qns => write!(f, "qns"),
            Method::Hyperpower(k) => write!(f, "hyperpower:{k}"),
            Method::Qrapid(n) => write!(f, "qrapid:{n}"),
            Method::Qsai => write!(f, "qsai"),
            Method::Qhpi19 => write!(f, "qhpi19"),
            Method::Qhon(p) => write!(f, "qhon:{p}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `qns`, `qsai`, `qhpi19`, `qrapid[:N]`, `qhon:p`, `hyperpower:k`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let num = |what: &str| -> Result<usize> {
            arg.ok_or_else(|| Error::InvalidArgument(format!("method `{s}` needs `:{what}`")))?
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} in method `{s}`")))
        };
        let m = match name {
            "qns" | "ns" | "newton-schulz" => Method::Qns,
            "qsai" => Method::Qsai,
            "qhpi19" => Method::Qhpi19,
            "qrapid" => Method::Qrapid(if arg.is_some() { num("N")? } else { 0 }),
            "qhon" => Method::Qhon(num("p")?),
            "hyperpower" => Method::Hyperpower(num("k")?),
            _ => return Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinvConfig {
    pub method: Method,
    /// Stop once `‖X_{j+1} − X_j‖_F < tol`.
    pub tol: f64,
    pub max_iters: usize,
    pub alpha_mode: AlphaMode,
    pub count_matmuls: bool,
}

impl Default for PinvConfig {
    fn default() -> Self {
        PinvConfig {
            method: Method::Qsai,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            alpha_mode: AlphaMode::Spectral,
            count_matmuls: true,
        }
    }
}

impl PinvConfig {
    pub fn new(method: Method) -> Self {
        PinvConfig { method, ..Default::default() }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_alpha(mut self, mode: AlphaMode) -> Self {
        self.alpha_mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        self.method.validate()
    }
}

/// The four Penrose defects `‖AXA−A‖, ‖XAX−X‖, ‖(AX)^H−AX‖, ‖(XA)^H−XA‖` (Frobenius).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Penrose {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
}

impl Penrose {
    pub fn max(&self) -> f64 {
        self.e1.max(self.e2).max(self.e3).max(self.e4)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.e1, self.e2, self.e3, self.e4]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    /// The step norm plateaued above `tol`.
    Stagnated,
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct PinvReport {
    pub x: QMat,
    pub method: Method,
    pub iterations: usize,
    pub step_history: Vec<f64>,
    pub penrose: Penrose,
    pub matmuls: u64,
    pub alpha_used: f64,
    pub stop: StopReason,
}

impl PinvReport {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// The fixed coefficients of the factorized order-10 and order-19 updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperCoeffs {
    pub beta1: f64,
    pub beta2: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub e1: f64,
    pub e2: f64,
}

impl HyperCoeffs {
    pub fn new() -> Self {
        let s5 = 5f64.sqrt();
        let s93 = 93f64.sqrt();
        let inner = (27.0 - 2.0 * s93).sqrt();
        HyperCoeffs {
            beta1: (1.0 + s5) / 2.0,
            beta2: (1.0 - s5) / 2.0,
            a1: 5.0 * (31.0 + s93) / 496.0,
            a2: (3.0 + s93) / 8.0,
            a3: 0.5,
            b1: -5.0 * (s93 - 31.0) / 496.0,
            b2: (3.0 - s93) / 8.0,
            b3: 0.5,
            c1: 3.0 / 8.0,
            c2: 321.0 / 1984.0,
            d1: (inner + 1.0) / 4.0,
            d2: (1.0 - inner) / 4.0,
            d3: (5.0 * s93 - 93.0) / 496.0,
            e1: (-93.0 - 5.0 * s93) / 496.0,
            e2: -s93 / 4.0,
        }
    }

    /// Coefficients (in powers of R², lowest first) of
    /// `(1 + a1·r + a2·r² + a3·r³ + r⁴)(1 + b1·r + b2·r² + b3·r³ + r⁴) + c1·r + c2·r²`
    /// with `r = R²`; ideally all ones.
    pub fn gamma_coefficients(&self) -> [f64; 9] {
        let p = [1.0, self.a1, self.a2, self.a3, 1.0];
        let q = [1.0, self.b1, self.b2, self.b3, 1.0];
        let mut out = [0.0; 9];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out[1] += self.c1;
        out[2] += self.c2;
        out
    }
}

impl Default for HyperCoeffs {
    fn default() -> Self {
        Self::new()
    }
}

pub fn penrose_errors(a: &QMat, x: &QMat) -> Result<Penrose> {
    if x.shape() != (a.cols(), a.rows()) {
        return Err(Error::mismatch("penrose_errors", a.shape(), x.shape()));
    }
    let ax = a * x;
    let xa = x * a;
    Ok(Penrose {
        e1: (&(&ax * a) - a).frobenius(),
        e2: (&(&xa * x) - x).frobenius(),
        e3: (&ax.adjoint() - &ax).frobenius(),
        e4: (&xa.adjoint() - &xa).frobenius(),
    })
}

fn check_step_shapes(a: &QMat, x: &QMat) -> Result<()> {
    if x.shape() != (a.cols(), a.rows()) {
        return Err(Error::mismatch("pinv step", a.shape(), x.shape()));
    }
    Ok(())
}

/// `X·(I + R + … + R^{k−1})` with `R = I − A·X`, by Horner's rule.
pub fn hyperpower_step(a: &QMat, x: &QMat, k: usize) -> Result<QMat> {
    check_step_shapes(a, x)?;
    Method::Hyperpower(k).validate()?;
    Ok(step(Method::Hyperpower(k), a, x, &MulTally::new(false), &HyperCoeffs::new()))
}

/// One iteration of `method` from `x`, with every product recorded on `tally`.
pub fn method_step(method: Method, a: &QMat, x: &QMat, tally: &MulTally) -> Result<QMat> {
    check_step_shapes(a, x)?;
    method.validate()?;
    Ok(step(method, a, x, tally, &HyperCoeffs::new()))
}

fn step(method: Method, a: &QMat, x: &QMat, t: &MulTally, hc: &HyperCoeffs) -> QMat {
    match method {
        Method::Qns => horner_step(a, x, 2, t),
        Method::Hyperpower(k) | Method::Qhon(k) => horner_step(a, x, k, t),
        Method::Qsai => qsai_step(a, x, t, hc),
        Method::Qhpi19 => qhpi19_step(a, x, t, hc),
        Method::Qrapid(n) => qrapid_step(a, x, n, t),
    }
}

fn horner_step(a: &QMat, x: &QMat, k: usize, t: &MulTally) -> QMat {
    let r = t.mul(a, x).identity_minus();
    let mut s = r.add_diag(1.0);
    for _ in 2..k {
        s = t.mul(&r, &s).add_diag(1.0);
    }
    t.mul(x, &s)
}

fn qsai_step(a: &QMat, x: &QMat, t: &MulTally, hc: &HyperCoeffs) -> QMat {
    let r = t.mul(a, x).identity_minus();
    let r2 = t.mul(&r, &r);
    let r4 = t.mul(&r2, &r2);
    let mut f1 = r4.add_diag(1.0);
    f1.axpy(hc.beta1, &r2);
    let mut f2 = r4.add_diag(1.0);
    f2.axpy(hc.beta2, &r2);
    let q = t.mul(&f1, &f2);
    let xr = t.mul(x, &r.add_diag(1.0));
    t.mul(&xr, &q)
}

fn qhpi19_step(a: &QMat, x: &QMat, t: &MulTally, hc: &HyperCoeffs) -> QMat {
    let r = t.mul(a, x).identity_minus();
    let r2 = t.mul(&r, &r);
    let r4 = t.mul(&r2, &r2);
    let gamma = qhpi19_gamma(&r2, &r4, t, hc);
    let mut rr2 = r.clone();
    rr2.axpy(1.0, &r2);
    let inner = t.mul(&rr2, &gamma).add_diag(1.0);
    t.mul(x, &inner)
}

/// `Γ = V·W + c₁R² + c₂R⁴`, two tracked products given `R²` and `R⁴`.
fn qhpi19_gamma(r2: &QMat, r4: &QMat, t: &MulTally, hc: &HyperCoeffs) -> QMat {
    let mut g1 = r4.add_diag(1.0);
    g1.axpy(hc.d1, r2);
    let mut g2 = r4.add_diag(1.0);
    g2.axpy(hc.d2, r2);
    let u = t.mul(&g1, &g2);
    let mut v = u.clone();
    v.axpy(hc.d3, r2);
    let mut w = u;
    w.axpy(hc.e1, r2);
    w.axpy(hc.e2, r4);
    let mut gamma = t.mul(&v, &w);
    gamma.axpy(hc.c1, r2);
    gamma.axpy(hc.c2, r4);
    gamma
}

/// The order-19 auxiliary polynomial `Γ(R)`, which equals `Σ_{t=0}^{8} R^{2t}`.
pub fn qhpi19_gamma_of(r: &QMat) -> QMat {
    let t = MulTally::new(false);
    let r2 = t.mul(r, r);
    let r4 = t.mul(&r2, &r2);
    qhpi19_gamma(&r2, &r4, &t, &HyperCoeffs::new())
}

/// `(I + R)(I + β₁R² + R⁴)(I + β₂R² + R⁴)`, which equals `Σ_{t=0}^{9} Rᵗ`.
pub fn qsai_polynomial_of(r: &QMat) -> QMat {
    let hc = HyperCoeffs::new();
    let r2 = r * r;
    let r4 = &r2 * &r2;
    let mut f1 = r4.add_diag(1.0);
    f1.axpy(hc.beta1, &r2);
    let mut f2 = r4.add_diag(1.0);
    f2.axpy(hc.beta2, &r2);
    &(&r.add_diag(1.0) * &f1) * &f2
}

fn qrapid_step(a: &QMat, x: &QMat, n: usize, t: &MulTally) -> QMat {
    let p = t.mul(a, x);
    let inner = t.mul(&p, &(-&p).add_diag(7.0));
    let inner = t.mul(&p, &(-&inner).add_diag(15.0));
    let u = &t.mul(x, &(-&inner).add_diag(13.0)) * 0.25;
    let correct = |base: &QMat, w: &QMat| -> QMat {
        let mut out = w.clone();
        out.axpy(1.0, &t.mul(base, &t.mul(a, w).identity_minus()));
        out
    };
    let v = correct(x, &u);
    let mut y = u;
    let mut w = v;
    for _ in 0..n {
        let z = correct(&y, &w);
        y = std::mem::replace(&mut w, z);
    }
    correct(x, &w)
}

/// Runs `cfg.method` on `a`, calling `observe(j, X_j)` for every iterate
/// including `X₀`.
pub fn pinv_observed(a: &QMat, cfg: &PinvConfig, mut observe: impl FnMut(usize, &QMat)) -> Result<PinvReport> {
    cfg.validate()?;
    if a.frobenius() == 0.0 {
        return Err(Error::ZeroOperator);
    }
    let alpha = scaling_alpha(a, cfg.alpha_mode)?;
    let x0 = a.adjoint().scale(alpha);
    observe(0, &x0);
    run_from(a, x0, cfg, alpha, &mut observe)
}

fn run_from(
    a: &QMat,
    mut x: QMat,
    cfg: &PinvConfig,
    alpha: f64,
    observe: &mut dyn FnMut(usize, &QMat),
) -> Result<PinvReport> {
    let tally = MulTally::new(cfg.count_matmuls);
    let hc = HyperCoeffs::new();
    let mut steps = Vec::new();
    let mut guard = StagnationGuard::default();
    let mut stop = StopReason::MaxIters;
    for j in 1..=cfg.max_iters {
        let next = step(cfg.method, a, &x, &tally, &hc);
        if !next.is_finite() {
            stop = StopReason::NonFinite;
            break;
        }
        let d = (&next - &x).frobenius();
        steps.push(d);
        x = next;
        observe(j, &x);
        if d < cfg.tol {
            stop = StopReason::Converged;
            break;
        }
        if guard.push(d) {
            stop = StopReason::Stagnated;
            break;
        }
    }
    let penrose = penrose_errors(a, &x)?;
    Ok(PinvReport {
        iterations: steps.len(),
        x,
        method: cfg.method,
        step_history: steps,
        penrose,
        matmuls: tally.count(),
        alpha_used: alpha,
        stop,
    })
}

/// Flags a plateau: several consecutive steps that set neither a new minimum
/// nor a new maximum while staying close to the smallest step seen so far.
/// Plain non-decrease is not enough, since step norms legitimately grow
/// while the iteration is still locking onto small singular values.
#[derive(Default)]
struct StagnationGuard {
    min: f64,
    max: f64,
    seen: bool,
    flat: usize,
}

impl StagnationGuard {
    fn push(&mut self, d: f64) -> bool {
        if !self.seen {
            (self.min, self.max, self.seen) = (d, d, true);
            return false;
        }
        if d < self.min {
            self.min = d;
            self.flat = 0;
        } else if d > self.max {
            self.max = d;
            self.flat = 0;
        } else if d <= STAGNATION_BAND * self.min {
            self.flat += 1;
        } else {
            self.flat = 0;
        }
        self.flat >= STAGNATION_WINDOW
    }
}

pub fn pinv(a: &QMat, cfg: &PinvConfig) -> Result<PinvReport> {
    pinv_observed(a, cfg, |_, _| {})
}

pub fn qns(a: &QMat, cfg: &PinvConfig) -> Result<PinvReport> {
    pinv(a, &PinvConfig { method: Method::Qns, ..cfg.clone() })
}

pub fn qrapid(a: &QMat, n: usize, cfg: &PinvConfig) -> Result<PinvReport> {
    pinv(a, &PinvConfig { method: Method::Qrapid(n), ..cfg.clone() })
}

pub fn qsai(a: &QMat, cfg: &PinvConfig) -> Result<PinvReport> {
    pinv(a, &PinvConfig { method: Method::Qsai, ..cfg.clone() })
}

pub fn qhpi19(a: &QMat, cfg: &PinvConfig) -> Result<PinvReport> {
    pinv(a, &PinvConfig { method: Method::Qhpi19, ..cfg.clone() })
}

pub fn qhon(a: &QMat, p: usize, cfg: &PinvConfig) -> Result<PinvReport> {
    pinv(a, &PinvConfig { method: Method::Qhon(p), ..cfg.clone() })
}

/// Computational efficiency index `k^{1/η}`.
pub fn cei(order: f64, matmuls_per_iter: f64) -> f64 {
    order.powf(1.0 / matmuls_per_iter)
}

/// Spectral norm of a quaternion matrix (largest singular value of its embedding).
pub fn spectral_norm(a: &QMat) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    Ok(jacobi_svd(&crate::cmat::embed(a))?.sigma[0])
}

/// Least-squares slope through the origin of `log r_{j+1}` against `log r_j`,
/// over the last `window` consecutive pairs with both terms in `(floor, 1)`.
pub fn fit_order(norms: &[f64], floor: f64, window: usize) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = norms
        .windows(2)
        .filter(|w| w[0] < 1.0 && w[1] > floor && w[0] > floor)
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    let tail = &pairs[pairs.len().saturating_sub(window)..];
    if tail.is_empty() {
        return None;
    }
    let sxy: f64 = tail.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = tail.iter().map(|(x, _)| x * x).sum();
    Some(sxy / sxx)
}

/// Spectral norms `‖I − A·X_j‖₂` along a run of `cfg.method`.
pub fn residual_norm_history(a: &QMat, cfg: &PinvConfig) -> Result<Vec<f64>> {
    let mut norms = Vec::new();
    let mut err = None;
    pinv_observed(a, cfg, |_, x| {
        if err.is_some() {
            return;
        }
        match spectral_norm(&(a * x).identity_minus()) {
            Ok(v) => norms.push(v),
            Err(e) => err = Some(e),
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(norms),
    }
}

/// Empirical convergence order of `cfg.method` on square `a`, from the
/// residual spectral norms of an actual run.
pub fn empirical_order(a: &QMat, cfg: &PinvConfig) -> Result<Option<f64>> {
    Ok(fit_order(&residual_norm_history(a, cfg)?, 1e-12, 3))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub method: Method,
    pub j_inject: usize,
    pub delta_before: f64,
    pub delta_after: f64,
    /// `‖ΔX_{j+1}‖_F / ‖ΔX_j‖_F`, reported as 0 when nothing was injected.
    pub growth_ratio: f64,
    pub r_norm: f64,
    pub a_norm: f64,
    pub x_norm: f64,
    pub converged: bool,
    pub final_penrose: Penrose,
}

impl PerturbationRecord {
    /// Single-step growth bound `k·max(1, ‖R‖^{k−1})·(1 + (k−1)‖A‖‖X‖)` for a
    /// method of order `k` (spectral norms).
    pub fn bound(&self) -> f64 {
        let k = self.method.order() as f64;
        k * 1f64.max(self.r_norm.powf(k - 1.0)) * (1.0 + (k - 1.0) * self.a_norm * self.x_norm)
    }
}

/// Runs `cfg.method` for `j_inject` iterations, adds a seeded random `ΔX` of
/// Frobenius size `magnitude`, measures how the next step propagates it, then
/// continues from the perturbed iterate to convergence.
pub fn perturbation_probe(
    a: &QMat,
    cfg: &PinvConfig,
    j_inject: usize,
    magnitude: f64,
    seed: u64,
) -> Result<PerturbationRecord> {
    cfg.validate()?;
    if a.frobenius() == 0.0 {
        return Err(Error::ZeroOperator);
    }
    let alpha = scaling_alpha(a, cfg.alpha_mode)?;
    let hc = HyperCoeffs::new();
    let quiet = MulTally::new(false);
    let mut x = a.adjoint().scale(alpha);
    for _ in 0..j_inject {
        x = step(cfg.method, a, &x, &quiet, &hc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = QMat::random_normal(x.rows(), x.cols(), &mut rng);
    let delta = noise.scale(magnitude / noise.frobenius());
    let xp = &x + &delta;
    let clean = step(cfg.method, a, &x, &quiet, &hc);
    let perturbed = step(cfg.method, a, &xp, &quiet, &hc);
    let delta_after = (&perturbed - &clean).frobenius();
    let delta_before = delta.frobenius();
    let growth_ratio = if delta_before == 0.0 { 0.0 } else { delta_after / delta_before };
    let rest = run_from(a, perturbed, cfg, alpha, &mut |_, _| {})?;
    Ok(PerturbationRecord {
        method: cfg.method,
        j_inject,
        delta_before,
        delta_after,
        growth_ratio,
        r_norm: spectral_norm(&(a * &x).identity_minus())?,
        a_norm: spectral_norm(a)?,
        x_norm: spectral_norm(&x)?,
        converged: rest.converged(),
        final_penrose: rest.penrose,
    })
}

/// Pseudoinverse engines usable by the applications.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Qsvd,
    Qns,
    Qsai,
    Qrapid(usize),
    Qhpi19,
}

impl Backend {
    pub const ALL: [Backend; 5] = [Backend::Qsvd, Backend::Qns, Backend::Qsai, Backend::Qrapid(0), Backend::Qhpi19];

    pub fn method(&self) -> Option<Method> {
        match *self {
            Backend::Qsvd => None,
            Backend::Qns => Some(Method::Qns),
            Backend::Qsai => Some(Method::Qsai),
            Backend::Qrapid(n) => Some(Method::Qrapid(n)),
            Backend::Qhpi19 => Some(Method::Qhpi19),
        }
    }

    /// `A^†`; iterative backends run from `α = 1/σ₁²` and fail only if they
    /// neither converge nor settle onto a plateau. A zero matrix maps to zero.
    ///
    /// Tall inputs are handled as `((A^H)^†)^H`: the iterates for `A^H` are
    /// exactly the adjoints of those for `A`, but the residual `I − A^H·Y`
    /// is the smaller n×n matrix.
    pub fn pseudo_inverse(&self, a: &QMat, tol: f64, max_iters: usize) -> Result<QMat> {
        let Some(method) = self.method() else {
            return qsvd_pinv(a, DEFAULT_RANK_TOL);
        };
        if a.frobenius() == 0.0 {
            return Ok(QMat::zeros(a.cols(), a.rows()));
        }
        if a.rows() > a.cols() {
            return Ok(self.pseudo_inverse(&a.adjoint(), tol, max_iters)?.adjoint());
        }
        let cfg = PinvConfig { method, tol, max_iters, alpha_mode: AlphaMode::Spectral, count_matmuls: false };
        let rep = pinv(a, &cfg)?;
        match rep.stop {
            StopReason::Converged | StopReason::Stagnated => Ok(rep.x),
            _ => Err(Error::NotConverged {
                context: format!("{self} backend on {}x{} matrix", a.rows(), a.cols()),
                iterations: rep.iterations,
            }),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Qsvd => write!(f, "qsvd"),
            Backend::Qns => write!(f, "qns"),
            Backend::Qsai => write!(f, "qsai"),
            Backend::Qrapid(0) => write!(f, "qrapid"),
            Backend::Qrapid(n) => write!(f, "qrapid:{n}"),
            Backend::Qhpi19 => write!(f, "qhpi19"),
        }
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("qsvd") {
            return Ok(Backend::Qsvd);
        }
        match s.parse::<Method>()? {
            Method::Qns => Ok(Backend::Qns),
            Method::Qsai => Ok(Backend::Qsai),
            Method::Qrapid(n) => Ok(Backend::Qrapid(n)),
            Method::Qhpi19 => Ok(Backend::Qhpi19),
            other => Err(Error::InvalidArgument(format!("{other} is not an application backend"))),
        }
    }
}

/// Lowest power of `r` in the scalar residual after one step, obtained by
/// running the update on polynomials in `r` (with `a = 1`, `x = 1 − r`).
fn qrapid_order(n: usize) -> usize {
    type Poly = Vec<f64>;
    fn mul(p: &Poly, q: &Poly) -> Poly {
        let mut out = vec![0.0; p.len() + q.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    }
    fn lin(p: &Poly, a: f64, q: &Poly, b: f64) -> Poly {
        (0..p.len().max(q.len()))
            .map(|i| a * p.get(i).copied().unwrap_or(0.0) + b * q.get(i).copied().unwrap_or(0.0))
            .collect()
    }
    let one: Poly = vec![1.0];
    let x: Poly = vec![1.0, -1.0];
    // with a = 1, I − a·w is 1 − w
    let correct = |base: &Poly, w: &Poly| lin(w, 1.0, &mul(base, &lin(&one, 1.0, w, -1.0)), 1.0);
    let p = x.clone();
    let t = mul(&p, &lin(&vec![7.0], 1.0, &p, -1.0));
    let t = mul(&p, &lin(&vec![15.0], 1.0, &t, -1.0));
    let u = lin(&mul(&x, &lin(&vec![13.0], 1.0, &t, -1.0)), 0.25, &one, 0.0);
    let v = correct(&x, &u);
    let (mut y, mut w) = (u, v);
    for _ in 0..n {
        let z = correct(&y, &w);
        y = std::mem::replace(&mut w, z);
    }
    let next = correct(&x, &w);
    let residual = lin(&one, 1.0, &next, -1.0);
    residual.iter().position(|c| c.abs() > 1e-9).unwrap_or(residual.len())
}
