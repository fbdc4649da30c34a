//! Experiment runners behind the CLI, plus artifact emission (CSV tables
//! with a provenance comment line, JSON-lines reports, atomic writes).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cur::{impute_reconstruct, Completion, CurConfig, Mask, QuatImage};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::krylov::{self, KrylovConfig, QsaiPrecond, Solver};
use crate::mm::{self, DenseReal};
use crate::pinv::{pinv, Backend, Method, PinvConfig, PinvReport};
use crate::qmat::{fro_dist, real_mask_apply, QMat};
use crate::signal::{build_filter_system, lorenz_integrate, solve_filter, LorenzParams, SignalFrame, Trajectory};
use crate::spectral::{qsvd_pinv, AlphaMode, DEFAULT_RANK_TOL};
use crate::VERSION;

/// Env var capping the number of experiment cells run concurrently.
pub const THREADS_ENV: &str = "QUATERN_THREADS";
/// Env var pointing at a local copy of `saylr1.mtx`.
pub const SAYLR1_ENV: &str = "QUATERN_SAYLR1";

/// Display psnr cap for identical images.
pub const PSNR_CAP_DB: f64 = 999.0;

pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Order-preserving parallel map over independent cells, at most
/// [`thread_cap`] at a time.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = thread_cap().min(items.len()).max(1);
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// What every CSV records in its leading comment line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub tol: f64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# seed={},tol={:e},version={}", self.seed, self.tol, VERSION)
    }
}

/// Comment line, header row, then one record per row.
pub fn csv_bytes<R: Serialize>(header: &[&str], rows: &[R], prov: Provenance) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(prov.comment().as_bytes());
    out.push(b'\n');
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let fail = |e: csv::Error| Error::InvalidArgument(format!("csv encoding: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))
}

pub fn jsonl_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::InvalidArgument(format!("json encoding: {e}")))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name =
        path.file_name().ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Output directory that remembers what it wrote, so a failed run can take
/// its partial outputs back.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    /// Directories this run created, outermost first.
    created: Vec<PathBuf>,
}

impl Artifacts {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mut created: Vec<PathBuf> =
            dir.ancestors().take_while(|a| !a.as_os_str().is_empty() && !a.exists()).map(PathBuf::from).collect();
        created.reverse();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Artifacts { dir, written: Vec::new(), created })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        if !self.written.contains(&path) {
            self.written.push(path.clone());
        }
        Ok(path)
    }

    /// `<stem>.csv` and `<stem>.jsonl` from the same rows.
    pub fn table<R: Serialize>(&mut self, stem: &str, header: &[&str], rows: &[R], prov: Provenance) -> Result<()> {
        self.write(&format!("{stem}.csv"), &csv_bytes(header, rows, prov)?)?;
        self.write(&format!("{stem}.jsonl"), &jsonl_bytes(rows)?)?;
        Ok(())
    }

    /// Removes everything written so far.
    pub fn discard(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        // only empty directories go; anything else in them was not ours
        for d in self.created.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Existence check for inputs, done before any computation.
pub fn check_input(path: &Path) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_file() {
        return Err(Error::InvalidArgument(format!("{} is not a regular file", path.display())));
    }
    Ok(())
}

// ---------------------------------------------------------------- selftest

#[derive(Clone, Debug, Serialize)]
pub struct SelftestRow {
    pub method: String,
    pub iterations: usize,
    pub expected_iterations: Option<usize>,
    pub max_deviation: f64,
    pub penrose_max: f64,
    pub pass: bool,
}

pub const SELFTEST_HEADER: [&str; 6] =
    ["method", "iterations", "expected_iterations", "max_deviation", "penrose_max", "pass"];

/// The 3×3 reference problem through the three high-order methods and QSVD.
pub fn selftest(tol: f64) -> Result<Vec<SelftestRow>> {
    let a = fixtures::example1_matrix();
    let reference = fixtures::example1_pinv_rounded();
    let mut rows = Vec::new();
    for (method, expected) in [(Method::Qsai, 4), (Method::Qrapid(1), 4), (Method::Qhpi19, 3)] {
        let rep = pinv(&a, &PinvConfig::new(method).with_tol(tol))?;
        let dev = fixtures::max_rounded_deviation(&rep.x, &reference);
        rows.push(SelftestRow {
            method: method.to_string(),
            iterations: rep.iterations,
            expected_iterations: Some(expected),
            max_deviation: dev,
            penrose_max: rep.penrose.max(),
            pass: rep.converged() && rep.iterations == expected && dev < 1e-12,
        });
    }
    let x = qsvd_pinv(&a, DEFAULT_RANK_TOL)?;
    let dev = fixtures::max_rounded_deviation(&x, &reference);
    rows.push(SelftestRow {
        method: "qsvd".into(),
        iterations: 0,
        expected_iterations: None,
        max_deviation: dev,
        penrose_max: crate::pinv::penrose_errors(&a, &x)?.max(),
        pass: dev < 1e-12,
    });
    Ok(rows)
}

// ------------------------------------------------------------------- pinv

#[derive(Clone, Debug, Serialize)]
pub struct PinvRecord {
    pub rows: usize,
    pub cols: usize,
    pub method: String,
    pub iterations: usize,
    pub matmuls: u64,
    pub alpha: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub stop: String,
    pub converged: bool,
}

pub const PINV_HEADER: [&str; 12] =
    ["rows", "cols", "method", "iterations", "matmuls", "alpha", "e1", "e2", "e3", "e4", "stop", "converged"];

impl PinvRecord {
    pub fn from_report(a: &QMat, rep: &PinvReport) -> Self {
        PinvRecord {
            rows: a.rows(),
            cols: a.cols(),
            method: rep.method.to_string(),
            iterations: rep.iterations,
            matmuls: rep.matmuls,
            alpha: rep.alpha_used,
            e1: rep.penrose.e1,
            e2: rep.penrose.e2,
            e3: rep.penrose.e3,
            e4: rep.penrose.e4,
            stop: format!("{:?}", rep.stop).to_lowercase(),
            converged: rep.converged(),
        }
    }
}

// ------------------------------------------------------------------ bench

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub m: usize,
    pub n: usize,
}

impl std::str::FromStr for Shape {
    type Err = Error;
    /// `n` (square) or `mxn`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad size `{s}` (expected n or mxn)"));
        let dims: Vec<usize> =
            s.trim().split(['x', 'X']).map(|t| t.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<_>>()?;
        let shape = match dims[..] {
            [n] => Shape { m: n, n },
            [m, n] => Shape { m, n },
            _ => return Err(bad()),
        };
        if shape.m == 0 || shape.n == 0 {
            return Err(bad());
        }
        Ok(shape)
    }
}

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub sizes: Vec<Shape>,
    pub methods: Vec<Method>,
    /// Planted rank; full-rank Gaussian matrices when `None`.
    pub rank: Option<usize>,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
    pub alpha_mode: AlphaMode,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub m: usize,
    pub n: usize,
    pub rank: Option<usize>,
    pub method: String,
    pub iterations: usize,
    pub matmuls: u64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    /// `‖X − X_qsvd‖_F / ‖X_qsvd‖_F`.
    pub qsvd_dist: f64,
    pub converged: bool,
    pub time_s: f64,
}

pub const BENCH_HEADER: [&str; 13] =
    ["m", "n", "rank", "method", "iterations", "matmuls", "e1", "e2", "e3", "e4", "qsvd_dist", "converged", "time_s"];

/// Sizes × methods. Each size gets one matrix (seeded by `seed + index`),
/// shared by all methods, and a QSVD reference computed alongside.
pub fn bench(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    if spec.sizes.is_empty() || spec.methods.is_empty() {
        return Err(Error::InvalidArgument("bench needs at least one size and one method".into()));
    }
    if let Some(r) = spec.rank {
        if let Some(s) = spec.sizes.iter().find(|s| r == 0 || r > s.m.min(s.n)) {
            return Err(Error::InvalidArgument(format!("rank {r} does not fit size {}x{}", s.m, s.n)));
        }
    }
    let indexed: Vec<(usize, Shape)> = spec.sizes.iter().copied().enumerate().collect();
    let problems = par_map(&indexed, |&(i, s)| -> Result<(QMat, QMat)> {
        let seed = spec.seed.wrapping_add(i as u64);
        let a = match spec.rank {
            Some(r) => fixtures::random_low_rank(s.m, s.n, r, seed),
            None => fixtures::random_matrix(s.m, s.n, seed),
        };
        let reference = qsvd_pinv(&a, DEFAULT_RANK_TOL)?;
        Ok((a, reference))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, Method)> =
        (0..problems.len()).flat_map(|i| spec.methods.iter().map(move |&m| (i, m))).collect();
    par_map(&cells, |&(i, method)| -> Result<BenchRow> {
        let (a, reference) = &problems[i];
        let cfg = PinvConfig {
            method,
            tol: spec.tol,
            max_iters: spec.max_iters,
            alpha_mode: spec.alpha_mode,
            count_matmuls: true,
        };
        let start = Instant::now();
        let rep = pinv(a, &cfg)?;
        let time_s = start.elapsed().as_secs_f64();
        let denom = reference.frobenius();
        Ok(BenchRow {
            m: a.rows(),
            n: a.cols(),
            rank: spec.rank,
            method: method.to_string(),
            iterations: rep.iterations,
            matmuls: rep.matmuls,
            e1: rep.penrose.e1,
            e2: rep.penrose.e2,
            e3: rep.penrose.e3,
            e4: rep.penrose.e4,
            qsvd_dist: fro_dist(&rep.x, reference)? / if denom > 0.0 { denom } else { 1.0 },
            converged: rep.converged(),
            time_s,
        })
    })
    .into_iter()
    .collect()
}

// ---------------------------------------------------------------- precond

/// Where the real system matrix comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemSource {
    MatrixMarket(PathBuf),
    /// The 238×238 reservoir-style stand-in.
    Synthetic,
}

impl SystemSource {
    /// Explicit path, else `QUATERN_SAYLR1`, else the synthetic stand-in.
    pub fn resolve(path: Option<PathBuf>) -> Self {
        path.or_else(|| std::env::var_os(SAYLR1_ENV).map(PathBuf::from))
            .map(SystemSource::MatrixMarket)
            .unwrap_or(SystemSource::Synthetic)
    }

    pub fn label(&self) -> String {
        match self {
            SystemSource::MatrixMarket(p) => p.display().to_string(),
            SystemSource::Synthetic => "synthetic-reservoir-14x17".into(),
        }
    }

    pub fn load(&self) -> Result<DenseReal> {
        match self {
            SystemSource::MatrixMarket(p) => Ok(mm::read_matrix_market(p)?.1),
            SystemSource::Synthetic => Ok(mm::synthetic_reservoir(14, 17, 3)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrecondSpec {
    pub source: SystemSource,
    pub block_sizes: Vec<usize>,
    pub solvers: Vec<Solver>,
    /// `None` = unpreconditioned.
    pub preconds: Vec<Option<QsaiPrecond>>,
    pub seed: u64,
    pub rr_tol: f64,
    pub k_max: usize,
}

impl PrecondSpec {
    pub fn new(source: SystemSource) -> Self {
        PrecondSpec {
            source,
            block_sizes: vec![3, 6],
            solvers: vec![Solver::GlQfom, Solver::GlQgmres],
            preconds: vec![None, Some(QsaiPrecond::default())],
            seed: 42,
            rr_tol: 1e-6,
            k_max: 3000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecondRow {
    pub m: usize,
    pub solver: String,
    pub precond: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_rr: f64,
    pub true_rr: f64,
    pub build_s: f64,
    pub solve_s: f64,
}

pub const PRECOND_HEADER: [&str; 9] =
    ["m", "solver", "precond", "iterations", "converged", "final_rr", "true_rr", "build_s", "solve_s"];

/// Block sizes × solvers × preconditioning on `A = A_s·(1 − i + 2j + 1.5k)`.
pub fn precond(spec: &PrecondSpec) -> Result<Vec<PrecondRow>> {
    let a_s = spec.source.load()?;
    let mut cells = Vec::new();
    for &m in &spec.block_sizes {
        for &solver in &spec.solvers {
            for &p in &spec.preconds {
                cells.push((m, solver, p));
            }
        }
    }
    par_map(&cells, |&(m, solver, p)| -> Result<PrecondRow> {
        let (a, b) = mm::build_saylr1_system(&a_s, m, spec.seed)?;
        let cfg = KrylovConfig { rr_tol: spec.rr_tol, k_max: spec.k_max, ..KrylovConfig::new(solver).with_precond(p) };
        let rep = krylov::solve(&a, &b, &cfg)?;
        Ok(PrecondRow {
            m,
            solver: solver.to_string(),
            precond: if p.is_some() { "qsai" } else { "none" }.into(),
            iterations: rep.iterations,
            converged: rep.converged,
            final_rr: rep.final_rr,
            true_rr: rep.true_rr,
            build_s: rep.precond_build.as_secs_f64(),
            solve_s: rep.solve_time.as_secs_f64(),
        })
    })
    .into_iter()
    .collect()
}

// -------------------------------------------------------------------- cur

#[derive(Clone, Debug)]
pub struct CurSpec {
    /// PPM image; the planted synthetic image when `None`.
    pub image: Option<PathBuf>,
    /// PGM mask; a seeded random mask when `None`.
    pub mask: Option<PathBuf>,
    pub missing_fraction: f64,
    /// `(height, width, rank)` of the planted image.
    pub synthetic: (usize, usize, usize),
    pub cfg: CurConfig,
}

impl Default for CurSpec {
    fn default() -> Self {
        CurSpec { image: None, mask: None, missing_fraction: 0.5, synthetic: (80, 60, 5), cfg: CurConfig::default() }
    }
}

#[derive(Clone, Debug)]
pub struct CurOutcome {
    pub truth: QMat,
    pub mask: Mask,
    pub completion: Completion,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurRow {
    pub iter: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

pub const CUR_HEADER: [&str; 3] = ["iter", "psnr_db", "ssim"];

impl CurOutcome {
    /// Metric rows with infinite psnr capped for CSV.
    pub fn rows(&self) -> Vec<CurRow> {
        self.completion
            .history
            .iter()
            .map(|h| CurRow { iter: h.iter, psnr_db: h.psnr_db.min(PSNR_CAP_DB), ssim: h.ssim })
            .collect()
    }
}

pub fn cur(spec: &CurSpec) -> Result<CurOutcome> {
    let truth = match &spec.image {
        Some(p) => QuatImage::read_ppm(p)?.pixels,
        None => {
            let (h, w, r) = spec.synthetic;
            fixtures::planted_image(h, w, r, spec.cfg.seed)
        }
    };
    let (h, w) = truth.shape();
    let mask = match &spec.mask {
        Some(p) => {
            let m = Mask::read_pgm(p)?;
            if (m.height, m.width) != (h, w) {
                return Err(Error::mismatch("cur mask", (h, w), (m.height, m.width)));
            }
            m
        }
        None => Mask::random(h, w, spec.missing_fraction, spec.cfg.seed)?,
    };
    let observed = real_mask_apply(&mask.weights(), &truth, &QMat::zeros(h, w))?;
    let completion = impute_reconstruct(&observed, &mask, &spec.cfg, Some(&truth))?;
    Ok(CurOutcome { truth, mask, completion })
}

// ----------------------------------------------------------------- lorenz

#[derive(Clone, Debug)]
pub struct LorenzSpec {
    pub dts: Vec<f64>,
    pub backends: Vec<Backend>,
    pub order: usize,
    /// Delay in samples.
    pub tau: usize,
    pub noise_rel: f64,
    pub seed: u64,
}

impl Default for LorenzSpec {
    fn default() -> Self {
        LorenzSpec {
            dts: vec![0.01, 0.02, 0.05],
            backends: vec![Backend::Qsvd, Backend::Qns, Backend::Qsai],
            order: 31,
            tau: 1,
            noise_rel: 1e-3,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LorenzRow {
    pub dt: f64,
    pub backend: String,
    pub time_s: f64,
    pub epsilon: f64,
}

pub const LORENZ_HEADER: [&str; 4] = ["dt", "backend", "time_s", "epsilon"];

#[derive(Clone, Debug, Serialize)]
pub struct SignalSample {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

pub const SIGNAL_HEADER: [&str; 4] = ["t", "u", "v", "w"];

pub fn signal_samples(tr: &Trajectory) -> Vec<SignalSample> {
    (0..tr.t.len()).map(|i| SignalSample { t: tr.t[i], u: tr.u[i], v: tr.v[i], w: tr.w[i] }).collect()
}

/// One `(order+1)`-square system per `dt`, starting right after the first
/// `order` samples, solved by every backend.
pub fn lorenz(spec: &LorenzSpec) -> Result<(Vec<LorenzRow>, Vec<(f64, Trajectory)>)> {
    let trajectories = spec
        .dts
        .iter()
        .map(|&dt| Ok((dt, lorenz_integrate(&LorenzParams::default().with_dt(dt))?)))
        .collect::<Result<Vec<_>>>()?;
    let systems = trajectories
        .iter()
        .map(|(_, tr)| {
            let frame = SignalFrame::from_trajectory(tr, spec.tau, spec.noise_rel, spec.seed)?;
            build_filter_system(&frame, spec.order, spec.order)
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, Backend)> =
        (0..systems.len()).flat_map(|i| spec.backends.iter().map(move |&b| (i, b))).collect();
    let rows = par_map(&cells, |&(i, backend)| -> Result<LorenzRow> {
        let (x, s) = &systems[i];
        let start = Instant::now();
        let (_, epsilon) = solve_filter(x, s, backend)?;
        Ok(LorenzRow { dt: spec.dts[i], backend: backend.to_string(), time_s: start.elapsed().as_secs_f64(), epsilon })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((rows, trajectories))
}
