//! Global FOM/GMRES for quaternion systems `A·X = B` with a block of right-hand
//! sides, optionally left-preconditioned by an approximate inverse.
//!
//! Blocks are orthogonalized under `⟨X, Y⟩ = Re tr(X^H Y)`, which is the plain
//! dot product of the 4·n·m real components, so the Hessenberg matrix is real.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pinv::{pinv, AlphaMode, Method, PinvConfig};
use crate::qmat::QMat;
use crate::quat::Quat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    GlQfom,
    GlQgmres,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::GlQfom => "gl-qfom",
            Solver::GlQgmres => "gl-qgmres",
        })
    }
}

/// Loose QSAI run used to build the left preconditioner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QsaiPrecond {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for QsaiPrecond {
    fn default() -> Self {
        QsaiPrecond { tol: 1e-2, max_iters: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovConfig {
    pub solver: Solver,
    pub rr_tol: f64,
    pub k_max: usize,
    pub restart: Option<usize>,
    pub precond: Option<QsaiPrecond>,
}

impl KrylovConfig {
    pub fn new(solver: Solver) -> Self {
        KrylovConfig { solver, rr_tol: 1e-6, k_max: 3000, restart: None, precond: None }
    }

    pub fn with_precond(mut self, p: Option<QsaiPrecond>) -> Self {
        self.precond = p;
        self
    }
}

#[derive(Clone, Debug)]
pub struct KrylovReport {
    pub x: QMat,
    pub solver: Solver,
    pub iterations: usize,
    /// `rr_history[j]` is the relative residual of `X_j` for the (possibly
    /// preconditioned) system actually iterated on; entry 0 is `X₀ = 0`.
    pub rr_history: Vec<f64>,
    /// Explicit `‖M(B − A·X)‖_F / ‖M·B‖_F` at exit (`M = I` without preconditioning).
    pub final_rr: f64,
    /// Explicit unpreconditioned `‖B − A·X‖_F / ‖B‖_F` at exit.
    pub true_rr: f64,
    pub precond_build: Duration,
    pub solve_time: Duration,
    pub converged: bool,
    /// FOM steps whose Hessenberg system was singular.
    pub skipped_steps: usize,
}

fn flatten(a: &QMat) -> Vec<f64> {
    a.as_slice().iter().flat_map(|q| q.to_array()).collect()
}

fn unflatten(v: &[f64], rows: usize, cols: usize) -> QMat {
    let data = v.chunks_exact(4).map(|c| Quat::new(c[0], c[1], c[2], c[3])).collect();
    QMat::from_vec(rows, cols, data).expect("block length matches shape")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArnoldiStatus {
    Extended,
    /// The new block vanished: the Krylov space is invariant and the
    /// projected problem is exact.
    Breakdown,
}

/// Global Arnoldi process on an operator acting on n×m quaternion blocks.
pub struct GlobalArnoldi<'a> {
    op: Box<dyn Fn(&QMat) -> QMat + 'a>,
    shape: (usize, usize),
    basis: Vec<Vec<f64>>,
    hess: Vec<Vec<f64>>,
    beta: f64,
}

impl<'a> GlobalArnoldi<'a> {
    /// Starts from `r0 / ‖r0‖_F`; `r0` must be nonzero.
    pub fn new(op: impl Fn(&QMat) -> QMat + 'a, r0: &QMat) -> Result<Self> {
        let v = flatten(r0);
        let beta = norm(&v);
        if beta == 0.0 {
            return Err(Error::InvalidArgument("Arnoldi start block is zero".into()));
        }
        Ok(GlobalArnoldi {
            op: Box::new(op),
            shape: r0.shape(),
            basis: vec![v.iter().map(|x| x / beta).collect()],
            hess: Vec::new(),
            beta,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of completed steps (Hessenberg columns).
    pub fn steps(&self) -> usize {
        self.hess.len()
    }

    pub fn basis_block(&self, i: usize) -> QMat {
        unflatten(&self.basis[i], self.shape.0, self.shape.1)
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    /// Column `j` of the (j+2)×(j+1) Hessenberg matrix; its last entry is the
    /// subdiagonal norm.
    pub fn hessenberg_column(&self, j: usize) -> &[f64] {
        &self.hess[j]
    }

    /// Applies the operator to the newest block and orthogonalizes the result
    /// by modified Gram–Schmidt, repeating the sweep once when cancellation
    /// is severe.
    pub fn step(&mut self) -> ArnoldiStatus {
        let last = self.basis.len() - 1;
        let w_q = (self.op)(&self.basis_block(last));
        let mut w = flatten(&w_q);
        let scale = norm(&w);
        let mut h = vec![0.0; self.basis.len() + 1];
        let mut before = scale;
        for _pass in 0..2 {
            for (i, v) in self.basis.iter().enumerate() {
                let c = dot(v, &w);
                h[i] += c;
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
            }
            let after = norm(&w);
            if after > 0.7 * before {
                break;
            }
            before = after;
        }
        let hn = norm(&w);
        let k = self.basis.len();
        h[k] = hn;
        if hn <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            h[k] = 0.0;
            self.hess.push(h);
            return ArnoldiStatus::Breakdown;
        }
        self.hess.push(h);
        self.basis.push(w.iter().map(|x| x / hn).collect());
        ArnoldiStatus::Extended
    }

    /// `Σ_i y_i·V_i` over the first `y.len()` basis blocks.
    pub fn combine(&self, y: &[f64]) -> QMat {
        let mut out = vec![0.0; self.basis[0].len()];
        for (c, v) in y.iter().zip(&self.basis) {
            out.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        unflatten(&out, self.shape.0, self.shape.1)
    }
}

/// Approximate inverse from a loose QSAI run (step tolerance `p.tol`, at most
/// `p.max_iters` iterations).
pub fn precondition_qsai(a: &QMat, p: QsaiPrecond) -> Result<QMat> {
    if !a.is_square() {
        return Err(Error::mismatch("precondition_qsai", a.shape(), (a.cols(), a.rows())));
    }
    let cfg = PinvConfig {
        method: Method::Qsai,
        tol: p.tol,
        max_iters: p.max_iters,
        alpha_mode: AlphaMode::Spectral,
        count_matmuls: false,
    };
    Ok(pinv(a, &cfg)?.x)
}

pub fn gl_qfom(a: &QMat, b: &QMat, cfg: &KrylovConfig) -> Result<KrylovReport> {
    solve(a, b, &KrylovConfig { solver: Solver::GlQfom, ..cfg.clone() })
}

pub fn gl_qgmres(a: &QMat, b: &QMat, cfg: &KrylovConfig) -> Result<KrylovReport> {
    solve(a, b, &KrylovConfig { solver: Solver::GlQgmres, ..cfg.clone() })
}

/// Solves `A·X = B` (or `M·A·X = M·B`) from `X₀ = 0`.
pub fn solve(a: &QMat, b: &QMat, cfg: &KrylovConfig) -> Result<KrylovReport> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::mismatch("krylov solve", a.shape(), b.shape()));
    }
    if !(cfg.rr_tol > 0.0) || cfg.k_max == 0 || cfg.restart == Some(0) {
        return Err(Error::InvalidArgument("rr_tol, k_max and restart must be positive".into()));
    }
    let t0 = Instant::now();
    let m = cfg.precond.map(|p| precondition_qsai(a, p)).transpose()?;
    let precond_build = t0.elapsed();

    let t1 = Instant::now();
    let (op_a, rhs) = match &m {
        Some(m) => (m * a, m * b),
        None => (a.clone(), b.clone()),
    };
    let beta0 = rhs.frobenius();
    let mut x = QMat::zeros(b.rows(), b.cols());
    let mut history = vec![1.0];
    let mut skipped = 0;
    let mut converged = beta0 == 0.0;
    let mut iterations = 0;
    while !converged && iterations < cfg.k_max {
        let r = &rhs - &(&op_a * &x);
        let budget = cfg.restart.unwrap_or(usize::MAX).min(cfg.k_max - iterations);
        let cycle = run_cycle(&op_a, &r, beta0, cfg, budget)?;
        iterations += cycle.steps;
        skipped += cycle.skipped;
        history.extend(cycle.rr);
        x = &x + &cycle.dx;
        let explicit = (&rhs - &(&op_a * &x)).frobenius() / beta0;
        if cycle.reached_tol && explicit <= cfg.rr_tol * (1.0 + 1e-3) {
            converged = true;
        } else if cycle.steps == 0 {
            break;
        }
    }
    let solve_time = t1.elapsed();
    let final_rr = if beta0 == 0.0 { 0.0 } else { (&rhs - &(&op_a * &x)).frobenius() / beta0 };
    let bn = b.frobenius();
    let true_rr = if bn == 0.0 { 0.0 } else { (b - &(a * &x)).frobenius() / bn };
    Ok(KrylovReport {
        x,
        solver: cfg.solver,
        iterations,
        rr_history: history,
        final_rr,
        true_rr,
        precond_build,
        solve_time,
        converged,
        skipped_steps: skipped,
    })
}

struct Cycle {
    dx: QMat,
    steps: usize,
    rr: Vec<f64>,
    reached_tol: bool,
    skipped: usize,
}

/// One (possibly restarted) Arnoldi cycle from residual `r`. Residual norms
/// come from the Givens recurrence; FOM's is GMRES's divided by the last cosine.
fn run_cycle(op_a: &QMat, r: &QMat, beta0: f64, cfg: &KrylovConfig, budget: usize) -> Result<Cycle> {
    let mut arn = GlobalArnoldi::new(|v: &QMat| op_a * v, r)?;
    let beta = arn.beta();
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut rr = Vec::new();
    let mut skipped = 0;
    let mut last_diag_pre = 0.0;
    let mut last_g_pre = 0.0;
    let mut reached = false;
    let mut steps = 0;
    let mut fom_ok = true;
    while steps < budget {
        let status = arn.step();
        steps += 1;
        let mut h = arn.hessenberg_column(steps - 1).to_vec();
        for i in 0..cs.len() {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        let k = steps - 1;
        last_diag_pre = h[k];
        last_g_pre = g[k];
        let d = h[k].hypot(h[k + 1]);
        let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (h[k] / d, h[k + 1] / d) };
        cs.push(c);
        sn.push(s);
        h[k] = d;
        h[k + 1] = 0.0;
        g.push(-s * g[k]);
        g[k] *= c;
        rcols.push(h);
        let gm = g[k + 1].abs() / beta0;
        let res = match cfg.solver {
            Solver::GlQgmres => gm,
            Solver::GlQfom => {
                fom_ok = c.abs() > 1e-14;
                if fom_ok {
                    gm / c.abs()
                } else {
                    skipped += 1;
                    f64::INFINITY
                }
            }
        };
        rr.push(res);
        if status == ArnoldiStatus::Breakdown || res <= cfg.rr_tol {
            reached = res <= cfg.rr_tol || (status == ArnoldiStatus::Breakdown && fom_ok);
            break;
        }
    }
    let k = rcols.len();
    let mut rhs: Vec<f64> = g[..k].to_vec();
    let mut diag_last = rcols[k - 1][k - 1];
    // A singular FOM system at exit falls back to the minimal-residual iterate.
    if cfg.solver == Solver::GlQfom && fom_ok {
        rhs[k - 1] = last_g_pre;
        diag_last = last_diag_pre;
    }
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = rhs[i];
        for j in i + 1..k {
            acc -= rcols[j][i] * y[j];
        }
        let dii = if i == k - 1 { diag_last } else { rcols[i][i] };
        y[i] = if dii == 0.0 { 0.0 } else { acc / dii };
    }
    Ok(Cycle { dx: arn.combine(&y), steps, rr, reached_tol: reached, skipped })
}
