//! Small reference problems with published answers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::qmat::QMat;
use crate::quat::Quat;

/// The rank-2 3×3 quaternion matrix of the classic small test case
/// (third row is twice the second).
pub fn example1_matrix() -> QMat {
    let s = [6.0, 1.0, 0.0, 2.0, 3.0, 2.0, 4.0, 6.0, 4.0];
    let x = [3.0, 5.0, 1.0, 1.0, 3.0, 5.0, 2.0, 6.0, 10.0];
    let y = [5.0, 2.0, 7.0, 1.0, 1.0, 2.0, 2.0, 2.0, 4.0];
    let z = [2.0, 3.0, 8.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
    QMat::from_components(3, 3, &s, &x, &y, &z).expect("3x3 planes")
}

/// Its pseudoinverse rounded to four decimals.
pub fn example1_pinv_rounded() -> QMat {
    let q = Quat::new;
    let cols = [
        [
            q(0.0627, -0.0325, -0.0520, 0.0236),
            q(-0.0118, -0.0229, 0.0102, 0.0314),
            q(-0.0042, 0.0458, -0.0116, -0.0362),
        ],
        [q(-0.0028, 0.0085, 0.0051, -0.0264), q(0.0164, -0.0075, -0.0129, -0.0092), q(0.0045, -0.0225, 0.0071, 0.0081)],
        [q(-0.0055, 0.0170, 0.0102, -0.0527), q(0.0327, -0.0150, -0.0259, -0.0183), q(0.0091, -0.0449, 0.0142, 0.0163)],
    ];
    QMat::from_fn(3, 3, |r, c| cols[c][r])
}

/// Published scaling `α = 1/σ₁²` for [`example1_matrix`].
pub const EXAMPLE1_ALPHA: f64 = 2.058856e-3;

/// Largest componentwise deviation after rounding `x` to four decimals.
pub fn max_rounded_deviation(x: &QMat, reference: &QMat) -> f64 {
    let round = |v: f64| (v * 1e4).round() / 1e4;
    x.as_slice()
        .iter()
        .zip(reference.as_slice())
        .flat_map(|(a, b)| {
            let (a, b) = (a.to_array(), b.to_array());
            (0..4).map(move |k| (round(a[k]) - b[k]).abs())
        })
        .fold(0.0, f64::max)
}

/// Square matrix with standard normal quaternion entries.
pub fn random_matrix(m: usize, n: usize, seed: u64) -> QMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QMat::random_normal(m, n, &mut rng)
}

/// `B·C` with normal `B` (m×r) and `C` (r×n): rank `r` almost surely.
pub fn random_low_rank(m: usize, n: usize, r: usize, seed: u64) -> QMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = QMat::random_normal(m, r, &mut rng);
    let c = QMat::random_normal(r, n, &mut rng);
    &b * &c
}

/// Well-conditioned square matrix: `I + E` with `‖E‖₂ ≈ 1/4`.
pub fn well_conditioned(n: usize, seed: u64) -> QMat {
    let e = random_matrix(n, n, seed);
    // a normal quaternion n×n matrix has spectral norm close to 4√n
    let scale = 0.25 / (4.0 * (n as f64).sqrt() + 4.0);
    e.scale(scale).add_diag(1.0)
}

/// Purely imaginary `m×n` image of exact quaternion rank `r`:
/// `B·(Cx·i + Cy·j + Cz·k)` with uniform real factors, scaled so the
/// largest channel value is 1.
pub fn planted_image(m: usize, n: usize, r: usize, seed: u64) -> QMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |len: usize| (0..len).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
    let b = uniform(m * r);
    let (cx, cy, cz) = (uniform(r * n), uniform(r * n), uniform(r * n));
    let bq = QMat::from_real_scaled(m, r, &b, Quat::ONE).expect("planes");
    let cq = QMat::from_components(r, n, &vec![0.0; r * n], &cx, &cy, &cz).expect("planes");
    let a = &bq * &cq;
    let peak = a.as_slice().iter().flat_map(|q| [q.x, q.y, q.z]).fold(0.0, f64::max);
    a.scale(1.0 / peak)
}
