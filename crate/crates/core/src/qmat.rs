//! Dense row-major quaternion matrices and the `QMAT v1` text format.

use std::cell::Cell;
use std::fmt::Write as _;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quat::Quat;

#[derive(Clone, Debug, PartialEq)]
pub struct QMat {
    rows: usize,
    cols: usize,
    data: Vec<Quat>,
}

impl QMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat { rows, cols, data: vec![Quat::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = QMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Quat::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Quat) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        QMat { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Quat>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(QMat { rows, cols, data })
    }

    /// Assembles `S + X·i + Y·j + Z·k` from four row-major real planes.
    pub fn from_components(rows: usize, cols: usize, s: &[f64], x: &[f64], y: &[f64], z: &[f64]) -> Result<Self> {
        let n = rows * cols;
        for plane in [s, x, y, z] {
            if plane.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "component plane has {} entries, expected {n}",
                    plane.len()
                )));
            }
        }
        let data = (0..n).map(|i| Quat::new(s[i], x[i], y[i], z[i])).collect();
        Ok(QMat { rows, cols, data })
    }

    /// A real matrix lifted into the quaternions, scaled by the quaternion `q` on the right.
    pub fn from_real_scaled(rows: usize, cols: usize, a: &[f64], q: Quat) -> Result<Self> {
        if a.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "real matrix has {} entries, expected {}",
                a.len(),
                rows * cols
            )));
        }
        Ok(QMat { rows, cols, data: a.iter().map(|&v| q * v).collect() })
    }

    /// Entries with independent standard normal components.
    pub fn random_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        QMat::from_fn(rows, cols, |_, _| {
            Quat::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            )
        })
    }

    /// Entries with independent components uniform on `[0, 1)`.
    pub fn random_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        QMat::from_fn(rows, cols, |_, _| Quat::new(rng.random(), rng.random(), rng.random(), rng.random()))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Quat] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Quat] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Quat> {
        self.data
    }

    /// One real component plane (0 = s, 1 = x, 2 = y, 3 = z), row-major.
    pub fn component(&self, k: usize) -> Vec<f64> {
        assert!(k < 4, "component index {k} out of range");
        self.data.iter().map(|q| q.to_array()[k]).collect()
    }

    pub fn map(&self, f: impl Fn(Quat) -> Quat) -> QMat {
        QMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&q| f(q)).collect() }
    }

    pub fn adjoint(&self) -> QMat {
        let mut out = QMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> QMat {
        let mut out = QMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> QMat {
        self.map(|q| q * c)
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.data.iter().map(|q| q.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sqr().sqrt()
    }

    pub fn max_abs_scalar_part(&self) -> f64 {
        self.data.iter().fold(0.0, |m, q| m.max(q.s.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|q| q.is_finite())
    }

    pub fn try_add(&self, other: &QMat) -> Result<QMat> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &QMat) -> Result<QMat> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    /// Entrywise Hamilton product.
    pub fn hadamard(&self, other: &QMat) -> Result<QMat> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    fn zip_with(&self, op: &'static str, other: &QMat, f: impl Fn(Quat, Quat) -> Quat) -> Result<QMat> {
        if self.shape() != other.shape() {
            return Err(Error::mismatch(op, self.shape(), other.shape()));
        }
        Ok(QMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self += c·other`.
    pub fn axpy(&mut self, c: f64, other: &QMat) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * c;
        }
    }

    /// `self + c·I` for square `self`.
    pub fn add_diag(&self, c: f64) -> QMat {
        assert!(self.is_square(), "add_diag on a non-square matrix");
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i].s += c;
        }
        out
    }

    /// `I − self` for square `self`.
    pub fn identity_minus(&self) -> QMat {
        (-self).add_diag(1.0)
    }

    pub fn matmul(&self, other: &QMat) -> Result<QMat> {
        if self.cols != other.rows {
            return Err(Error::mismatch("mat_mul", self.shape(), other.shape()));
        }
        Ok(matmul_kernel(self, other))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<QMat> {
        check_indices(idx, self.rows)?;
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        Ok(QMat { rows: idx.len(), cols: self.cols, data })
    }

    pub fn select_cols(&self, idx: &[usize]) -> Result<QMat> {
        check_indices(idx, self.cols)?;
        Ok(QMat::from_fn(self.rows, idx.len(), |r, c| self[(r, idx[c])]))
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<QMat> {
        self.select_rows(rows)?.select_cols(cols)
    }

    /// The `QMAT v1` text serialization (shortest round-trip decimal representation).
    pub fn to_qmat_string(&self) -> String {
        let mut out = format!("QMAT v1 {} {}\n", self.rows, self.cols);
        for q in &self.data {
            let _ = writeln!(out, "{} {} {} {}", q.s, q.x, q.y, q.z);
        }
        out
    }

    pub fn parse_qmat(text: &str, source: &str) -> Result<QMat> {
        let mut lines = text.lines().enumerate();
        let (_, header) =
            lines.next().ok_or_else(|| Error::parse(source, 1, "empty file, expected `QMAT v1 <rows> <cols>`"))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 4 || tok[0] != "QMAT" || tok[1] != "v1" {
            return Err(Error::parse(source, 1, format!("bad header `{header}`")));
        }
        let dim = |t: &str| t.parse::<usize>().map_err(|_| Error::parse(source, 1, format!("bad dimension `{t}`")));
        let (rows, cols) = (dim(tok[2])?, dim(tok[3])?);
        let want = rows * cols;
        let mut data = Vec::with_capacity(want);
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if data.len() == want {
                return Err(Error::parse(source, lineno, format!("extra entry beyond {want} declared")));
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(source, lineno, format!("bad number: {e}")))?;
            if vals.len() != 4 {
                return Err(Error::parse(source, lineno, format!("expected 4 components, found {}", vals.len())));
            }
            data.push(Quat::new(vals[0], vals[1], vals[2], vals[3]));
        }
        if data.len() != want {
            return Err(Error::parse(
                source,
                text.lines().count() + 1,
                format!("truncated: {} of {want} entries", data.len()),
            ));
        }
        Ok(QMat { rows, cols, data })
    }

    pub fn read_qmat(path: impl AsRef<Path>) -> Result<QMat> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        QMat::parse_qmat(&text, &path.display().to_string())
    }

    pub fn write_qmat(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_qmat_string()).map_err(|e| Error::io(path, e))
    }
}

fn check_indices(idx: &[usize], extent: usize) -> Result<()> {
    let mut seen = vec![false; extent];
    for &i in idx {
        if i >= extent {
            return Err(Error::IndexOutOfRange { index: i, extent });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// `C = A·B`. `B` is split into four component planes so that the innermost
/// loop runs over contiguous reals and vectorizes.
fn matmul_kernel(a: &QMat, b: &QMat) -> QMat {
    let (m, p, n) = (a.rows, a.cols, b.cols);
    let split = |k: usize| -> Vec<f64> { b.data.iter().map(|q| q.to_array()[k]).collect() };
    let (bs, bx, by, bz) = (split(0), split(1), split(2), split(3));
    let mut out = Vec::with_capacity(m * n);
    let mut cs = vec![0.0; n];
    let mut cx = vec![0.0; n];
    let mut cy = vec![0.0; n];
    let mut cz = vec![0.0; n];
    for r in 0..m {
        cs.fill(0.0);
        cx.fill(0.0);
        cy.fill(0.0);
        cz.fill(0.0);
        for t in 0..p {
            let q = a.data[r * p + t];
            if q == Quat::ZERO {
                continue;
            }
            let row = t * n..(t + 1) * n;
            let (s, x, y, z) = (&bs[row.clone()], &bx[row.clone()], &by[row.clone()], &bz[row]);
            for c in 0..n {
                cs[c] += q.s * s[c] - q.x * x[c] - q.y * y[c] - q.z * z[c];
                cx[c] += q.s * x[c] + q.x * s[c] + q.y * z[c] - q.z * y[c];
                cy[c] += q.s * y[c] - q.x * z[c] + q.y * s[c] + q.z * x[c];
                cz[c] += q.s * z[c] + q.x * y[c] - q.y * x[c] + q.z * s[c];
            }
        }
        out.extend((0..n).map(|c| Quat::new(cs[c], cx[c], cy[c], cz[c])));
    }
    QMat { rows: m, cols: n, data: out }
}

pub fn mat_mul(a: &QMat, b: &QMat) -> Result<QMat> {
    a.matmul(b)
}

pub fn adjoint(a: &QMat) -> QMat {
    a.adjoint()
}

pub fn frobenius(a: &QMat) -> f64 {
    a.frobenius()
}

pub fn fro_dist(a: &QMat, b: &QMat) -> Result<f64> {
    Ok(a.try_sub(b)?.frobenius())
}

pub fn hadamard(a: &QMat, b: &QMat) -> Result<QMat> {
    a.hadamard(b)
}

pub fn identity(n: usize) -> QMat {
    QMat::identity(n)
}

/// `Ω⊙M + (1−Ω)⊙X` for a real row-major mask `Ω`, broadcast over the quaternion components.
pub fn real_mask_apply(omega: &[f64], m: &QMat, x: &QMat) -> Result<QMat> {
    if m.shape() != x.shape() {
        return Err(Error::mismatch("real_mask_apply", m.shape(), x.shape()));
    }
    if omega.len() != m.data.len() {
        return Err(Error::InvalidArgument(format!("mask has {} entries, matrix has {}", omega.len(), m.data.len())));
    }
    let data = omega.iter().zip(m.data.iter().zip(&x.data)).map(|(&w, (&a, &b))| a * w + b * (1.0 - w)).collect();
    Ok(QMat { rows: m.rows, cols: m.cols, data })
}

/// Per-run tally of tracked matrix products.
///
/// Deliberately not `Sync`: a tally belongs to one solver run.
#[derive(Debug, Default)]
pub struct MulTally {
    enabled: bool,
    count: Cell<u64>,
}

impl MulTally {
    pub fn new(enabled: bool) -> Self {
        MulTally { enabled, count: Cell::new(0) }
    }

    /// Shape-checked product; panics on mismatch, which callers rule out up front.
    pub fn mul(&self, a: &QMat, b: &QMat) -> QMat {
        if self.enabled {
            self.count.set(self.count.get() + 1);
        }
        a.matmul(b).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }
}

impl Index<(usize, usize)> for QMat {
    type Output = Quat;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Quat {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds for {}x{}", self.rows, self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for QMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Quat {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds for {}x{}", self.rows, self.cols);
        &mut self.data[r * self.cols + c]
    }
}

// The operator forms panic on shape mismatch; use `matmul`/`try_add`/`try_sub`
// where shapes come from untrusted input.

impl Mul<&QMat> for &QMat {
    type Output = QMat;
    fn mul(self, rhs: &QMat) -> QMat {
        self.matmul(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl Add<&QMat> for &QMat {
    type Output = QMat;
    fn add(self, rhs: &QMat) -> QMat {
        self.try_add(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl Sub<&QMat> for &QMat {
    type Output = QMat;
    fn sub(self, rhs: &QMat) -> QMat {
        self.try_sub(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl Neg for &QMat {
    type Output = QMat;
    fn neg(self) -> QMat {
        self.map(|q| -q)
    }
}

impl Mul<f64> for &QMat {
    type Output = QMat;
    fn mul(self, c: f64) -> QMat {
        self.scale(c)
    }
}
