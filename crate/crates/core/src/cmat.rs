//! Dense complex matrices and the complex representation of quaternion matrices.

use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qmat::QMat;
use crate::quat::Quat;

#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn try_sub(&self, other: &CMat) -> Result<CMat> {
        if self.shape() != other.shape() {
            return Err(Error::mismatch("sub", self.shape(), other.shape()));
        }
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn matmul(&self, other: &CMat) -> Result<CMat> {
        if self.cols != other.rows {
            return Err(Error::mismatch("complex mat_mul", self.shape(), other.shape()));
        }
        let (m, p, n) = (self.rows, self.cols, other.cols);
        let mut out = CMat::zeros(m, n);
        for r in 0..m {
            let acc = &mut out.data[r * n..(r + 1) * n];
            for t in 0..p {
                let a = self.data[r * p + t];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (o, b) in acc.iter_mut().zip(&other.data[t * n..(t + 1) * n]) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul<&CMat> for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        self.matmul(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

/// The complex representation `[[S + X·i, Y + Z·i], [−Y + Z·i, S − X·i]]` of size 2m×2n.
pub fn embed(a: &QMat) -> CMat {
    let (m, n) = a.shape();
    let mut c = CMat::zeros(2 * m, 2 * n);
    for r in 0..m {
        for k in 0..n {
            let q = a[(r, k)];
            c[(r, k)] = Complex64::new(q.s, q.x);
            c[(r, n + k)] = Complex64::new(q.y, q.z);
            c[(m + r, k)] = Complex64::new(-q.y, q.z);
            c[(m + r, n + k)] = Complex64::new(q.s, -q.x);
        }
    }
    c
}

/// Left inverse of [`embed`]; the quaternion is read off by averaging the
/// redundant blocks, and inputs that stray from the block structure by more
/// than `1e-8·(1 + ‖C‖_F)` are rejected.
pub fn unembed(c: &CMat) -> Result<QMat> {
    let (rr, cc) = c.shape();
    if rr % 2 != 0 || cc % 2 != 0 {
        return Err(Error::InvalidArgument(format!("complex representation must have even dimensions, got {rr}x{cc}")));
    }
    let (m, n) = (rr / 2, cc / 2);
    let q = QMat::from_fn(m, n, |r, k| {
        let p11 = c[(r, k)];
        let p22 = c[(m + r, n + k)];
        let q12 = c[(r, n + k)];
        let q21 = c[(m + r, k)];
        Quat::new((p11.re + p22.re) / 2.0, (p11.im - p22.im) / 2.0, (q12.re - q21.re) / 2.0, (q12.im + q21.im) / 2.0)
    });
    let deviation = c.try_sub(&embed(&q))?.frobenius();
    let tolerance = 1e-8 * (1.0 + c.frobenius());
    if deviation > tolerance {
        return Err(Error::EmbeddingStructure { deviation, tolerance });
    }
    Ok(q)
}
