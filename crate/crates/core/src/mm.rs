//! Matrix Market (coordinate, real) ingestion and the quaternion test system
//! built from a real sparse matrix.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::qmat::QMat;
use crate::quat::Quat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MMHeader {
    pub object: String,
    pub format: String,
    pub field: String,
    pub symmetry: Symmetry,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
}

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseReal {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseReal {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<(MMHeader, DenseReal)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text, &path.display().to_string())
}

/// Parses `%%MatrixMarket matrix coordinate real {general|symmetric}`.
/// Indices are 1-based, symmetric entries are mirrored, duplicates summed.
pub fn parse_matrix_market(text: &str, source: &str) -> Result<(MMHeader, DenseReal)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| Error::parse(source, 1, "empty file"))?;
    let tok: Vec<String> = banner.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tok.len() != 5 || tok[0] != "%%matrixmarket" {
        return Err(Error::parse(source, 1, format!("bad banner `{banner}`")));
    }
    if tok[1] != "matrix" || tok[2] != "coordinate" || tok[3] != "real" {
        return Err(Error::parse(
            source,
            1,
            format!("unsupported `{} {} {}`; only `matrix coordinate real` is read", tok[1], tok[2], tok[3]),
        ));
    }
    let symmetry = match tok[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::parse(source, 1, format!("unsupported symmetry `{other}`"))),
    };

    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (size_line, size) =
        body.next().ok_or_else(|| Error::parse(source, text.lines().count() + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(source, size_line, format!("bad size line: {e}")))?;
    if dims.len() != 3 {
        return Err(Error::parse(source, size_line, "size line needs `rows cols nnz`"));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(Error::parse(source, size_line, "symmetric matrix must be square"));
    }

    let mut data = vec![0.0; rows * cols];
    let mut seen = 0;
    for (lineno, line) in body {
        if seen == nnz {
            return Err(Error::parse(source, lineno, format!("more than the declared {nnz} entries")));
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(Error::parse(source, lineno, format!("expected `i j value`, got `{line}`")));
        }
        let idx = |s: &str, extent: usize| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| Error::parse(source, lineno, format!("bad index `{s}`")))?;
            if v == 0 || v > extent {
                return Err(Error::parse(source, lineno, format!("index {v} outside 1..={extent}")));
            }
            Ok(v - 1)
        };
        let (i, j) = (idx(t[0], rows)?, idx(t[1], cols)?);
        let v: f64 = t[2].parse().map_err(|_| Error::parse(source, lineno, format!("bad value `{}`", t[2])))?;
        data[i * cols + j] += v;
        if symmetry == Symmetry::Symmetric && i != j {
            data[j * cols + i] += v;
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::parse(source, text.lines().count() + 1, format!("truncated: {seen} of {nnz} entries")));
    }
    let header =
        MMHeader { object: tok[1].clone(), format: tok[2].clone(), field: tok[3].clone(), symmetry, rows, cols, nnz };
    Ok((header, DenseReal { rows, cols, data }))
}

/// Component scales of the quaternion system matrix, `1 − i + 2j + 1.5k`.
pub const SYSTEM_SCALES: Quat = Quat::new(1.0, -1.0, 2.0, 1.5);

/// `A = A_s·(1 − i + 2j + 1.5k)` and a seeded `B` (n×m) with all four
/// components uniform on `[0, 1)`.
pub fn build_saylr1_system(a_s: &DenseReal, m: usize, seed: u64) -> Result<(QMat, QMat)> {
    if a_s.rows != a_s.cols {
        return Err(Error::mismatch("build_saylr1_system", (a_s.rows, a_s.cols), (a_s.cols, a_s.rows)));
    }
    let a = QMat::from_real_scaled(a_s.rows, a_s.cols, &a_s.data, SYSTEM_SCALES)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = QMat::random_uniform(a_s.rows, m, &mut rng);
    Ok((a, b))
}

/// Stand-in for a reservoir-simulation matrix: a five-point finite-volume
/// operator on an `nx × ny` grid with log-normal permeabilities,
/// harmonic-mean transmissibilities, upwind-biased convection and a small
/// accumulation term. Nonsymmetric and moderately ill-conditioned.
pub fn synthetic_reservoir(nx: usize, ny: usize, seed: u64) -> DenseReal {
    let n = nx * ny;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lognormal = Normal::new(0.0, 1.0).expect("valid normal");
    let perm: Vec<f64> = (0..n).map(|_| f64::exp(lognormal.sample(&mut rng))).collect();
    let idx = |i: usize, j: usize| i * ny + j;
    let mut data = vec![0.0; n * n];
    for i in 0..nx {
        for j in 0..ny {
            let k = idx(i, j);
            data[k * n + k] += 1e-3 * perm[k];
            for (di, dj, bias) in [(1i64, 0i64, 0.3), (-1, 0, -0.3), (0, 1, 0.1), (0, -1, -0.1)] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                    continue;
                }
                let nb = idx(ii as usize, jj as usize);
                let t = 2.0 / (1.0 / perm[k] + 1.0 / perm[nb]);
                data[k * n + k] += t * (1.0 + bias);
                data[k * n + nb] -= t * (1.0 - bias);
            }
        }
    }
    DenseReal { rows: n, cols: n, data }
}
