//! The quaternion scalar `q = s + x·i + y·j + z·k`.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A real quaternion with scalar part `s` and vector part `(x, y, z)`.
///
/// Multiplication is the Hamilton product, `i² = j² = k² = ijk = −1`, and is
/// not commutative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const ZERO: Quat = Quat::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quat = Quat::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quat = Quat::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quat = Quat::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(s: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { s, x, y, z }
    }

    pub const fn real(s: f64) -> Self {
        Quat::new(s, 0.0, 0.0, 0.0)
    }

    /// Purely imaginary quaternion `x·i + y·j + z·k`.
    pub const fn pure(x: f64, y: f64, z: f64) -> Self {
        Quat::new(0.0, x, y, z)
    }

    #[inline]
    pub fn conj(self) -> Self {
        Quat::new(self.s, -self.x, -self.y, -self.z)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.s * self.s + self.x * self.x + self.y * self.y + self.z * self.z
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(self) -> Option<Self> {
        let n = self.norm_sqr();
        (n > 0.0).then(|| self.conj() * (1.0 / n))
    }

    #[inline]
    pub fn scale(self, c: f64) -> Self {
        Quat::new(self.s * c, self.x * c, self.y * c, self.z * c)
    }

    pub fn is_finite(self) -> bool {
        self.s.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }
}

/// Hamilton product of `a` and `b`, in that order.
#[inline]
pub fn quat_mul(a: Quat, b: Quat) -> Quat {
    Quat {
        s: a.s * b.s - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.s * b.x + a.x * b.s + a.y * b.z - a.z * b.y,
        y: a.s * b.y - a.x * b.z + a.y * b.s + a.z * b.x,
        z: a.s * b.z + a.x * b.y - a.y * b.x + a.z * b.s,
    }
}

impl Add for Quat {
    type Output = Quat;
    #[inline]
    fn add(self, o: Quat) -> Quat {
        Quat::new(self.s + o.s, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Quat {
    #[inline]
    fn add_assign(&mut self, o: Quat) {
        *self = *self + o;
    }
}

impl Sub for Quat {
    type Output = Quat;
    #[inline]
    fn sub(self, o: Quat) -> Quat {
        Quat::new(self.s - o.s, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Quat {
    #[inline]
    fn sub_assign(&mut self, o: Quat) {
        *self = *self - o;
    }
}

impl Neg for Quat {
    type Output = Quat;
    #[inline]
    fn neg(self) -> Quat {
        Quat::new(-self.s, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quat {
    type Output = Quat;
    #[inline]
    fn mul(self, o: Quat) -> Quat {
        quat_mul(self, o)
    }
}

impl Mul<f64> for Quat {
    type Output = Quat;
    #[inline]
    fn mul(self, c: f64) -> Quat {
        self.scale(c)
    }
}

impl Mul<Quat> for f64 {
    type Output = Quat;
    #[inline]
    fn mul(self, q: Quat) -> Quat {
        q.scale(self)
    }
}

impl Div<f64> for Quat {
    type Output = Quat;
    #[inline]
    fn div(self, c: f64) -> Quat {
        Quat::new(self.s / c, self.x / c, self.y / c, self.z / c)
    }
}

impl From<f64> for Quat {
    fn from(s: f64) -> Self {
        Quat::real(s)
    }
}

impl fmt::Display for Quat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(4);
        write!(f, "{:.p$}", self.s)?;
        for (v, unit) in [(self.x, 'i'), (self.y, 'j'), (self.z, 'k')] {
            let sign = if v.is_sign_negative() { '-' } else { '+' };
            write!(f, " {sign} {:.p$}{unit}", v.abs())?;
        }
        Ok(())
    }
}
