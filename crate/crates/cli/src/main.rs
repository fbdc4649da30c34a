use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quatern::cur::{CurConfig, QuatImage, Selection, UMode};
use quatern::experiments::{self as exp, Artifacts, Provenance, Shape};
use quatern::krylov::{QsaiPrecond, Solver};
use quatern::pinv::DEFAULT_MAX_ITERS;
use quatern::{AlphaMode, Backend, Method, PinvConfig, QMat};

#[derive(Parser, Debug)]
#[command(name = "quatern", version, about = "Quaternion pseudoinverse experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pseudoinverse of a QMAT file with one method
    Pinv {
        input: PathBuf,
        #[arg(long, default_value = "qsai")]
        method: Method,
        /// spectral | frobenius | <value>
        #[arg(long, default_value = "spectral", value_parser = parse_alpha)]
        alpha: AlphaMode,
        #[command(flatten)]
        common: Common,
    },
    /// Methods × sizes sweep on random matrices
    Bench {
        /// Comma-separated sizes, `n` or `mxn`
        #[arg(long, value_delimiter = ',', default_value = "20,40")]
        sizes: Vec<Shape>,
        #[arg(long, value_delimiter = ',', default_value = "qns,qsai,qrapid,qhpi19")]
        methods: Vec<Method>,
        /// Planted rank (full-rank matrices if omitted)
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value = "spectral", value_parser = parse_alpha)]
        alpha: AlphaMode,
        #[command(flatten)]
        common: Common,
    },
    /// Global FOM/GMRES with and without QSAI preconditioning
    Precond {
        /// Matrix Market file (falls back to $QUATERN_SAYLR1, then a synthetic stand-in)
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        precond: PrecondChoice,
        /// Right-hand-side block sizes
        #[arg(long, value_delimiter = ',', default_value = "3,6")]
        rhs: Vec<usize>,
        /// Relative residual target
        #[arg(long, default_value_t = 1e-6)]
        rr_tol: f64,
        #[arg(long, default_value_t = 3000)]
        k_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// CUR-based completion of a quaternion (RGB) image
    Cur {
        /// PPM image (a planted low-rank image if omitted)
        input: Option<PathBuf>,
        /// PGM mask, 0 = missing
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        missing_fraction: f64,
        #[arg(long, default_value_t = 10)]
        rank: usize,
        #[arg(long, default_value_t = 40)]
        iters: usize,
        #[arg(long, default_value = "qsai")]
        method: Backend,
        #[arg(long, default_value = "opt")]
        u_mode: UMode,
        /// Gaussian smoothing of each reconstruction
        #[arg(long)]
        sigma: Option<f64>,
        /// Keep the first index draw for every sweep
        #[arg(long)]
        fixed_indices: bool,
        /// Sample rows/columns by squared norm instead of uniformly
        #[arg(long)]
        energy: bool,
        #[command(flatten)]
        common: Common,
    },
    /// FIR filter identification on a noisy Lorenz trajectory
    Lorenz {
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05")]
        dt: Vec<f64>,
        #[arg(long, default_value_t = 31)]
        order: usize,
        #[arg(long, value_delimiter = ',', default_value = "qsvd,qns,qsai")]
        methods: Vec<Backend>,
        #[arg(long, default_value_t = 1e-3)]
        noise: f64,
        /// Also write the trajectories as t,u,v,w
        #[arg(long)]
        dump: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce the 3×3 reference example
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecondChoice {
    None,
    Qsai,
    Both,
}

fn parse_alpha(s: &str) -> Result<AlphaMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "spectral" => Ok(AlphaMode::Spectral),
        "frobenius" => Ok(AlphaMode::Frobenius),
        v => match v.parse::<f64>() {
            Ok(a) if a > 0.0 && a.is_finite() => Ok(AlphaMode::Explicit(a)),
            _ => Err(format!("expected spectral, frobenius or a positive number, got `{s}`")),
        },
    }
}

/// `Ok(false)` means the run completed but a check failed.
fn run(cmd: Command, art: &mut Option<Artifacts>) -> quatern::Result<bool> {
    let open = |art: &mut Option<Artifacts>, dir: &Path| -> quatern::Result<()> {
        *art = Some(Artifacts::create(dir)?);
        Ok(())
    };
    match cmd {
        Command::Pinv { input, method, alpha, common } => {
            exp::check_input(&input)?;
            open(art, &common.out)?;
            let a = QMat::read_qmat(&input)?;
            let cfg = PinvConfig {
                method,
                tol: common.tol,
                max_iters: common.max_iters,
                alpha_mode: alpha,
                count_matmuls: true,
            };
            let rep = quatern::pinv(&a, &cfg)?;
            let rec = exp::PinvRecord::from_report(&a, &rep);
            let out = art.as_mut().unwrap();
            out.write("pinv.qmat", rep.x.to_qmat_string().as_bytes())?;
            out.table("pinv", &exp::PINV_HEADER, &[rec.clone()], prov(&common))?;
            println!(
                "{method}: {} iterations, {} matmuls, max Penrose error {:.3e} ({})",
                rec.iterations,
                rec.matmuls,
                rep.penrose.max(),
                rec.stop
            );
            Ok(rep.converged())
        }
        Command::Bench { sizes, methods, rank, alpha, common } => {
            open(art, &common.out)?;
            let spec = exp::BenchSpec {
                sizes,
                methods,
                rank,
                seed: common.seed,
                tol: common.tol,
                max_iters: common.max_iters,
                alpha_mode: alpha,
            };
            let rows = exp::bench(&spec)?;
            art.as_mut().unwrap().table("bench", &exp::BENCH_HEADER, &rows, prov(&common))?;
            for r in &rows {
                println!(
                    "{:>4}x{:<4} {:<10} iters={:<4} matmuls={:<5} E_max={:.2e} qsvd_dist={:.2e} {:.3}s",
                    r.m,
                    r.n,
                    r.method,
                    r.iterations,
                    r.matmuls,
                    r.e1.max(r.e2).max(r.e3).max(r.e4),
                    r.qsvd_dist,
                    r.time_s
                );
            }
            Ok(true)
        }
        Command::Precond { input, precond, rhs, rr_tol, k_max, common } => {
            if let Some(p) = &input {
                exp::check_input(p)?;
            }
            let source = exp::SystemSource::resolve(input);
            if let exp::SystemSource::MatrixMarket(p) = &source {
                exp::check_input(p)?;
            }
            open(art, &common.out)?;
            let mut spec = exp::PrecondSpec::new(source);
            spec.block_sizes = rhs;
            spec.seed = common.seed;
            spec.rr_tol = rr_tol;
            spec.k_max = k_max;
            spec.preconds = match precond {
                PrecondChoice::None => vec![None],
                PrecondChoice::Qsai => vec![Some(QsaiPrecond::default())],
                PrecondChoice::Both => vec![None, Some(QsaiPrecond::default())],
            };
            spec.solvers = vec![Solver::GlQfom, Solver::GlQgmres];
            println!("system: {}", spec.source.label());
            let rows = exp::precond(&spec)?;
            let p = Provenance { seed: common.seed, tol: rr_tol };
            art.as_mut().unwrap().table("precond", &exp::PRECOND_HEADER, &rows, p)?;
            for r in &rows {
                println!(
                    "m={} {:<9} precond={:<4} iters={:<5} rr={:.2e} true_rr={:.2e}",
                    r.m, r.solver, r.precond, r.iterations, r.final_rr, r.true_rr
                );
            }
            Ok(rows.iter().all(|r| r.converged))
        }
        Command::Cur {
            input,
            mask,
            missing_fraction,
            rank,
            iters,
            method,
            u_mode,
            sigma,
            fixed_indices,
            energy,
            common,
        } => {
            for p in input.iter().chain(mask.iter()) {
                exp::check_input(p)?;
            }
            open(art, &common.out)?;
            let spec = exp::CurSpec {
                image: input,
                mask,
                missing_fraction,
                cfg: CurConfig {
                    rank,
                    iters,
                    backend: method,
                    u_mode,
                    gaussian_sigma: sigma,
                    selection: if energy { Selection::Energy } else { Selection::UniformRandom },
                    seed: common.seed,
                    redraw: !fixed_indices,
                    pinv_tol: common.tol,
                    pinv_max_iters: common.max_iters,
                },
                ..Default::default()
            };
            let outcome = exp::cur(&spec)?;
            let out = art.as_mut().unwrap();
            out.write("completed.ppm", &outcome.completion.image.to_ppm_bytes())?;
            out.write("original.ppm", &QuatImage::from_qmat(&outcome.truth).to_ppm_bytes())?;
            out.write("mask.pgm", &outcome.mask.to_pgm_bytes())?;
            out.table("cur", &exp::CUR_HEADER, &outcome.rows(), prov(&common))?;
            out.write("cur_history.jsonl", &exp::jsonl_bytes(&outcome.completion.history)?)?;
            if let Some(last) = outcome.completion.history.last() {
                println!(
                    "after {} sweeps: PSNR {:.2} dB, SSIM {:.4}, relative error {:.3e}",
                    last.iter, last.psnr_db, last.ssim, last.rel_error
                );
            }
            Ok(true)
        }
        Command::Lorenz { dt, order, methods, noise, dump, common } => {
            open(art, &common.out)?;
            let spec = exp::LorenzSpec {
                dts: dt,
                backends: methods,
                order,
                noise_rel: noise,
                seed: common.seed,
                ..Default::default()
            };
            let (rows, trajectories) = exp::lorenz(&spec)?;
            let out = art.as_mut().unwrap();
            out.table("lorenz", &exp::LORENZ_HEADER, &rows, prov(&common))?;
            if dump {
                for (dt, tr) in &trajectories {
                    let samples = exp::signal_samples(tr);
                    out.write(
                        &format!("signal_dt{dt}.csv"),
                        &exp::csv_bytes(&exp::SIGNAL_HEADER, &samples, prov(&common))?,
                    )?;
                }
            }
            for r in &rows {
                println!("dt={:<5} {:<7} epsilon={:.3e} {:.4}s", r.dt, r.backend, r.epsilon, r.time_s);
            }
            Ok(true)
        }
        Command::Selftest { common } => {
            let rows = exp::selftest(common.tol)?;
            for r in &rows {
                println!(
                    "{} {:<8} iterations={} (expected {}) max_dev={:.1e} penrose={:.1e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.method,
                    r.iterations,
                    r.expected_iterations.map_or("-".into(), |e| e.to_string()),
                    r.max_deviation,
                    r.penrose_max
                );
            }
            open(art, &common.out)?;
            art.as_mut().unwrap().table("selftest", &exp::SELFTEST_HEADER, &rows, prov(&common))?;
            Ok(rows.iter().all(|r| r.pass))
        }
    }
}

fn prov(c: &Common) -> Provenance {
    Provenance { seed: c.seed, tol: c.tol }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut art = None;
    let outcome = run(cli.command, &mut art);
    if matches!(outcome, Ok(true)) {
        return ExitCode::SUCCESS;
    }
    if let Some(a) = art {
        a.discard();
    }
    match outcome {
        Err(e) => {
            eprintln!("quatern: {e}");
            ExitCode::from(2)
        }
        _ => {
            eprintln!("quatern: check failed");
            ExitCode::from(1)
        }
    }
}
