//! CUR-based completion of quaternion-encoded RGB images.
//!
//! A pixel `(R, G, B)` is the pure quaternion `R·i + G·j + B·k`. Missing pixels
//! are filled by alternating a CUR reconstruction with reinsertion of the
//! observed pixels.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pinv::{Backend, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::qmat::{real_mask_apply, QMat};
use crate::quat::Quat;

#[derive(Clone, Debug, PartialEq)]
pub struct QuatImage {
    pub pixels: QMat,
}

impl QuatImage {
    /// From interleaved 8-bit RGB, row-major.
    pub fn from_rgb8(height: usize, width: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != height * width * 3 {
            return Err(Error::InvalidArgument(format!(
                "{height}x{width} RGB image needs {} bytes, got {}",
                height * width * 3,
                rgb.len()
            )));
        }
        let px = QMat::from_fn(height, width, |r, c| {
            let o = 3 * (r * width + c);
            Quat::pure(rgb[o] as f64 / 255.0, rgb[o + 1] as f64 / 255.0, rgb[o + 2] as f64 / 255.0)
        });
        Ok(QuatImage { pixels: px })
    }

    /// Wraps a matrix, zeroing scalar parts and clamping channels to `[0, 1]`.
    pub fn from_qmat(m: &QMat) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        QuatImage { pixels: m.map(|q| Quat::pure(c(q.x), c(q.y), c(q.z))) }
    }

    pub fn height(&self) -> usize {
        self.pixels.rows()
    }

    pub fn width(&self) -> usize {
        self.pixels.cols()
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        self.pixels.as_slice().iter().flat_map(|p| [q(p.x), q(p.y), q(p.z)]).collect()
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let (w, h, maxval, data) = read_netpbm(BufReader::new(f), "P6", 3, &path.display().to_string())?;
        let scale = maxval as f64;
        let px = QMat::from_fn(h, w, |r, c| {
            let o = 3 * (r * w + c);
            Quat::pure(data[o] / scale, data[o + 1] / scale, data[o + 2] / scale)
        });
        Ok(QuatImage { pixels: px })
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width(), self.height()).into_bytes();
        out.extend(self.to_rgb8());
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a binary netpbm image; returns `(width, height, maxval, samples)`.
fn read_netpbm(
    mut r: impl BufRead,
    magic: &str,
    channels: usize,
    source: &str,
) -> Result<(usize, usize, u32, Vec<f64>)> {
    let mut fields = Vec::new();
    let mut line = String::new();
    let mut lineno = 0;
    while fields.len() < 4 {
        line.clear();
        lineno += 1;
        if r.read_line(&mut line).map_err(|e| Error::io(source, e))? == 0 {
            return Err(Error::parse(source, lineno, "truncated header"));
        }
        let content = line.split('#').next().unwrap_or("");
        fields.extend(content.split_whitespace().map(str::to_owned));
    }
    if fields.len() > 4 {
        return Err(Error::parse(source, lineno, "pixel data must start on the line after maxval"));
    }
    if fields[0] != magic {
        return Err(Error::parse(source, 1, format!("expected `{magic}`, found `{}`", fields[0])));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::parse(source, lineno, format!("bad header field `{s}`")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(source, lineno, format!("maxval {maxval} out of range")));
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let n = w * h * channels;
    let mut raw = vec![0u8; n * bytes_per];
    r.read_exact(&mut raw)
        .map_err(|_| Error::parse(source, lineno + 1, format!("pixel data shorter than {} bytes", raw.len())))?;
    let data = if bytes_per == 1 {
        raw.iter().map(|&b| b as f64).collect()
    } else {
        raw.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64).collect()
    };
    Ok((w, h, maxval as u32, data))
}

/// Observation mask: `true` where the pixel is known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub observed: Vec<bool>,
}

impl Mask {
    pub fn full(height: usize, width: usize) -> Self {
        Mask { height, width, observed: vec![true; height * width] }
    }

    /// Each pixel independently missing with probability `missing_fraction`.
    pub fn random(height: usize, width: usize, missing_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&missing_fraction) {
            return Err(Error::InvalidArgument(format!("missing fraction must lie in [0, 1), got {missing_fraction}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let observed = (0..height * width).map(|_| rng.random::<f64>() >= missing_fraction).collect();
        Ok(Mask { height, width, observed })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.observed.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.observed.iter().filter(|&&o| !o).count() as f64 / self.observed.len().max(1) as f64
    }

    /// PGM (P5): 0 = missing, anything else = observed.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let (w, h, _, data) = read_netpbm(BufReader::new(f), "P5", 1, &path.display().to_string())?;
        Ok(Mask { height: h, width: w, observed: data.iter().map(|&v| v != 0.0).collect() })
    }

    /// P5, 0 = missing, 255 = observed.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.observed.iter().map(|&o| if o { 255u8 } else { 0 }));
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Separable Gaussian blur of one real channel (row-major `h × w`), kernel
/// radius `ceil(3σ)`, normalized to unit sum, half-sample symmetric padding.
pub fn gaussian_blur(channel: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(channel.len(), h * w, "channel size");
    assert!(sigma > 0.0, "sigma must be positive");
    let kernel = gaussian_kernel(sigma);
    let rad = (kernel.len() / 2) as i64;
    let reflect = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let period = 2 * n;
        let mut m = i.rem_euclid(period);
        if m >= n {
            m = period - 1 - m;
        }
        m as usize
    };
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * channel[r * w + reflect(c as i64 + k as i64 - rad, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] =
                kernel.iter().enumerate().map(|(k, wt)| wt * tmp[reflect(r as i64 + k as i64 - rad, h) * w + c]).sum();
        }
    }
    out
}

/// Normalized 1-D Gaussian weights over `[-ceil(3σ), ceil(3σ)]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let rad = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-rad..=rad).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn blur_pure(m: &QMat, sigma: f64) -> QMat {
    let (h, w) = m.shape();
    let x = gaussian_blur(&m.component(1), h, w, sigma);
    let y = gaussian_blur(&m.component(2), h, w, sigma);
    let z = gaussian_blur(&m.component(3), h, w, sigma);
    QMat::from_components(h, w, &m.component(0), &x, &y, &z).expect("same shape")
}

/// PSNR in dB over the three imaginary channels with peak 1; `+∞` for identical inputs.
pub fn psnr(x: &QMat, truth: &QMat) -> Result<f64> {
    if x.shape() != truth.shape() {
        return Err(Error::mismatch("psnr", x.shape(), truth.shape()));
    }
    let n = 3 * x.as_slice().len();
    let sse: f64 = x
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2))
        .sum();
    let mse = sse / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

const SSIM_WIN: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean SSIM over all 8×8 sliding windows (uniform weights) of each
/// imaginary channel, averaged over the three channels.
pub fn ssim(x: &QMat, truth: &QMat) -> Result<f64> {
    if x.shape() != truth.shape() {
        return Err(Error::mismatch("ssim", x.shape(), truth.shape()));
    }
    let (h, w) = x.shape();
    let win_h = SSIM_WIN.min(h);
    let win_w = SSIM_WIN.min(w);
    let mut total = 0.0;
    for k in 1..4 {
        let a = x.component(k);
        let b = truth.component(k);
        let mut acc = 0.0;
        let mut count = 0usize;
        for r0 in 0..=h - win_h {
            for c0 in 0..=w - win_w {
                let mut s = [0.0f64; 5];
                for r in r0..r0 + win_h {
                    for c in c0..c0 + win_w {
                        let (u, v) = (a[r * w + c], b[r * w + c]);
                        s[0] += u;
                        s[1] += v;
                        s[2] += u * u;
                        s[3] += v * v;
                        s[4] += u * v;
                    }
                }
                let n = (win_h * win_w) as f64;
                let (mu, mv) = (s[0] / n, s[1] / n);
                let vu = s[2] / n - mu * mu;
                let vv = s[3] / n - mv * mv;
                let cov = s[4] / n - mu * mv;
                acc += ((2.0 * mu * mv + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mu * mu + mv * mv + SSIM_C1) * (vu + vv + SSIM_C2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    Ok(total / 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UMode {
    /// `U = C^†·A·R^†`.
    Opt,
    /// `U = W^†` with `W = A[I, J]`.
    Cross,
}

impl FromStr for UMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "opt" => Ok(UMode::Opt),
            "cross" => Ok(UMode::Cross),
            _ => Err(Error::InvalidArgument(format!("unknown u-mode `{s}` (opt|cross)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    /// Uniform without replacement.
    UniformRandom,
    /// Without replacement, probability proportional to squared row/column norm.
    Energy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurConfig {
    pub rank: usize,
    pub iters: usize,
    pub backend: Backend,
    pub u_mode: UMode,
    pub gaussian_sigma: Option<f64>,
    pub selection: Selection,
    pub seed: u64,
    /// Draw fresh row/column indices every sweep instead of once.
    pub redraw: bool,
    pub pinv_tol: f64,
    pub pinv_max_iters: usize,
}

impl Default for CurConfig {
    fn default() -> Self {
        CurConfig {
            rank: 8,
            iters: 15,
            backend: Backend::Qsai,
            u_mode: UMode::Opt,
            gaussian_sigma: None,
            selection: Selection::UniformRandom,
            seed: 0,
            redraw: false,
            pinv_tol: DEFAULT_TOL,
            pinv_max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// `C = A[:, J]`, `R = A[I, :]`, and the coupling matrix `U` per `u_mode`.
pub fn cur_factor(
    a: &QMat,
    rows: &[usize],
    cols: &[usize],
    u_mode: UMode,
    backend: Backend,
    tol: f64,
    max_iters: usize,
) -> Result<(QMat, QMat, QMat)> {
    let c = a.select_cols(cols)?;
    let r = a.select_rows(rows)?;
    let u = match u_mode {
        UMode::Opt => {
            let cp = backend.pseudo_inverse(&c, tol, max_iters)?;
            let rp = backend.pseudo_inverse(&r, tol, max_iters)?;
            &(&cp * a) * &rp
        }
        UMode::Cross => backend.pseudo_inverse(&a.submatrix(rows, cols)?, tol, max_iters)?,
    };
    Ok((c, u, r))
}

fn select(rng: &mut ChaCha8Rng, weights: &[f64], k: usize, how: Selection) -> Result<Vec<usize>> {
    let n = weights.len();
    if k > n {
        return Err(Error::InsufficientSamples { needed: k, available: n });
    }
    let mut idx: Vec<usize> = match how {
        Selection::UniformRandom => index::sample(rng, n, k).into_vec(),
        Selection::Energy => {
            let floor = weights.iter().cloned().fold(0.0, f64::max) * 1e-12 + f64::MIN_POSITIVE;
            index::sample_weighted(rng, n, |i| weights[i] + floor, k)
                .map_err(|e| Error::InvalidArgument(format!("weighted selection failed: {e}")))?
                .into_vec()
        }
    };
    idx.sort_unstable();
    Ok(idx)
}

fn draw_indices(a: &QMat, k: usize, how: Selection, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let (m, n) = a.shape();
    let mut row_w = vec![0.0; m];
    let mut col_w = vec![0.0; n];
    if how == Selection::Energy {
        for r in 0..m {
            for c in 0..n {
                let e = a[(r, c)].norm_sqr();
                row_w[r] += e;
                col_w[c] += e;
            }
        }
    }
    let rows = select(rng, &row_w, k, how)?;
    let cols = select(rng, &col_w, k, how)?;
    Ok((rows, cols))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepMetrics {
    pub iter: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    /// `‖X − A‖_F / ‖A‖_F` for the completed image `X`.
    pub rel_error: f64,
    /// Largest scalar-part magnitude produced by the reconstruction.
    pub scalar_leak: f64,
}

#[derive(Clone, Debug)]
pub struct Completion {
    pub image: QuatImage,
    /// The completed matrix before clamping to a valid image.
    pub raw: QMat,
    pub history: Vec<SweepMetrics>,
}

/// Impute–reconstruct loop. Missing entries start at zero; each sweep forms a
/// CUR reconstruction of the current estimate, optionally blurs it, and
/// reinserts the observed entries. With `truth` supplied, per-sweep metrics
/// are recorded against it.
pub fn impute_reconstruct(observed: &QMat, mask: &Mask, cfg: &CurConfig, truth: Option<&QMat>) -> Result<Completion> {
    let (m, n) = observed.shape();
    if (mask.height, mask.width) != (m, n) {
        return Err(Error::mismatch("impute_reconstruct", (m, n), (mask.height, mask.width)));
    }
    if cfg.rank == 0 || cfg.rank > m.min(n) {
        return Err(Error::InvalidArgument(format!("rank {} must lie in 1..={}", cfg.rank, m.min(n))));
    }
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument("iters must be positive".into()));
    }
    if let Some(t) = truth {
        if t.shape() != (m, n) {
            return Err(Error::mismatch("impute_reconstruct truth", (m, n), t.shape()));
        }
    }
    let omega = mask.weights();
    let zeros = QMat::zeros(m, n);
    let mut current = real_mask_apply(&omega, observed, &zeros)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fixed = None;
    let mut history = Vec::new();
    for t in 0..cfg.iters {
        let (rows, cols) = match (&fixed, cfg.redraw) {
            (Some(ix), false) => Clone::clone(ix),
            _ => {
                let ix = draw_indices(&current, cfg.rank, cfg.selection, &mut rng)?;
                fixed = Some(ix.clone());
                ix
            }
        };
        let (c, u, r) = cur_factor(&current, &rows, &cols, cfg.u_mode, cfg.backend, cfg.pinv_tol, cfg.pinv_max_iters)
            .map_err(|e| match e {
            Error::NotConverged { context, iterations } => {
                Error::NotConverged { context: format!("sweep {}: {context}", t + 1), iterations }
            }
            other => other,
        })?;
        let mut recon = &(&c * &u) * &r;
        let scalar_leak = recon.max_abs_scalar_part();
        if let Some(sigma) = cfg.gaussian_sigma {
            recon = blur_pure(&recon, sigma);
        }
        current = real_mask_apply(&omega, observed, &recon)?;
        if let Some(truth) = truth {
            let clean = QuatImage::from_qmat(&current).pixels;
            history.push(SweepMetrics {
                iter: t + 1,
                psnr_db: psnr(&clean, truth)?,
                ssim: ssim(&clean, truth)?,
                rel_error: (&current - truth).frobenius() / truth.frobenius(),
                scalar_leak,
            });
        }
    }
    Ok(Completion { image: QuatImage::from_qmat(&current), raw: current, history })
}
