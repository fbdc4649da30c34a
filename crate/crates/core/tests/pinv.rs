use proptest::prelude::*;
use quatern::cmat::embed;
use quatern::fixtures::{random_low_rank, random_matrix, well_conditioned};
use quatern::pinv::*;
use quatern::qmat::fro_dist;
use quatern::spectral::{jacobi_svd, qsvd_pinv, scaling_alpha, DEFAULT_RANK_TOL};
use quatern::{MulTally, QMat, Quat};

fn power(r: &QMat, k: usize) -> QMat {
    let mut p = QMat::identity(r.rows());
    for _ in 0..k {
        p = p.matmul(r).unwrap();
    }
    p
}

fn power_sum(r: &QMat, terms: impl Iterator<Item = usize>) -> QMat {
    let mut s = QMat::zeros(r.rows(), r.cols());
    for t in terms {
        s = &s + &power(r, t);
    }
    s
}

/// `X` with `I − A·X = R₀` for a random `R₀` of spectral norm `rho`.
fn start_with_residual(n: usize, rho: f64, seed: u64) -> (QMat, QMat) {
    let a = well_conditioned(n, seed);
    let r0 = random_matrix(n, n, seed ^ 0xabc);
    let r0 = r0.scale(rho / spectral_norm(&r0).unwrap());
    let ainv = qsvd_pinv(&a, DEFAULT_RANK_TOL).unwrap();
    let x = &ainv * &r0.identity_minus();
    (a, x)
}

fn residual(a: &QMat, x: &QMat) -> QMat {
    (a * x).identity_minus()
}

fn one_step(method: Method, a: &QMat, x: &QMat) -> QMat {
    method_step(method, a, x, &MulTally::new(false)).unwrap()
}

fn check_recurrence(
    method: Method,
    n: usize,
    rho: f64,
    seed: u64,
    tol: f64,
    oracle: impl Fn(&QMat) -> QMat,
) -> Result<(), TestCaseError> {
    let (a, x) = start_with_residual(n, rho, seed);
    let r = residual(&a, &x);
    let next = residual(&a, &one_step(method, &a, &x));
    let want = oracle(&r);
    let k = method.order() as i32;
    let err = fro_dist(&next, &want).unwrap();
    prop_assert!(err <= tol * (1.0 + r.frobenius().powi(k)), "{method}: err {err:e}, |want| {:e}", want.frobenius());
    // the recurrence is not vacuous: the predicted residual is well above the error
    prop_assert!(want.frobenius() > 100.0 * err || want.frobenius() < 1e-12);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qns_squares_the_residual(seed in any::<u64>(), rho in 0.2f64..0.9) {
        check_recurrence(Method::Qns, 5, rho, seed, 1e-12, |r| power(r, 2))?;
    }

    #[test]
    fn qsai_raises_the_residual_to_the_tenth(seed in any::<u64>(), rho in 0.5f64..0.95) {
        check_recurrence(Method::Qsai, 5, rho, seed, 1e-11, |r| power(r, 10))?;
    }

    #[test]
    fn qhpi19_raises_the_residual_to_the_nineteenth(seed in any::<u64>(), rho in 0.3f64..0.5) {
        check_recurrence(Method::Qhpi19, 5, rho, seed, 1e-10, |r| power(r, 19))?;
    }

    #[test]
    fn qrapid_residual_recurrence(seed in any::<u64>(), rho in 0.4f64..0.9) {
        check_recurrence(Method::Qrapid(0), 5, rho, seed, 1e-11, |r| {
            &power(r, 5).scale(0.75) + &power(r, 6).scale(0.25)
        })?;
    }

    #[test]
    fn hyperpower_k3_cubes_the_residual(seed in any::<u64>(), rho in 0.2f64..0.9) {
        let (a, x) = start_with_residual(4, rho, seed);
        let r = residual(&a, &x);
        let next = residual(&a, &hyperpower_step(&a, &x, 3).unwrap());
        prop_assert!(fro_dist(&next, &power(&r, 3)).unwrap() <= 1e-12 * (1.0 + r.frobenius().powi(3)));
    }

    #[test]
    fn qsai_factorization_identity(seed in any::<u64>(), rho in 0.1f64..0.99) {
        let r = random_matrix(5, 5, seed);
        let r = r.scale(rho / spectral_norm(&r).unwrap());
        let want = power_sum(&r, 0..10);
        let x = random_matrix(3, 5, seed ^ 5);
        let lhs = &x * &qsai_polynomial_of(&r);
        let rhs = &x * &want;
        prop_assert!(fro_dist(&lhs, &rhs).unwrap() <= 1e-12 * rhs.frobenius());
    }

    #[test]
    fn qhpi19_gamma_identity(seed in any::<u64>(), rho in 0.1f64..0.99) {
        let r = random_matrix(5, 5, seed);
        let r = r.scale(rho / spectral_norm(&r).unwrap());
        let want = power_sum(&r, (0..9).map(|t| 2 * t));
        prop_assert!(fro_dist(&qhpi19_gamma_of(&r), &want).unwrap() <= 1e-11 * want.frobenius());
    }

    #[test]
    fn initialization_is_contractive(seed in any::<u64>()) {
        let a = random_matrix(5, 3, seed);
        let sigma = jacobi_svd(&embed(&a)).unwrap().sigma;
        let ap = qsvd_pinv(&a, DEFAULT_RANK_TOL).unwrap();
        for mode in [AlphaMode::Spectral, AlphaMode::Frobenius] {
            let alpha = scaling_alpha(&a, mode).unwrap();
            let rho = sigma.iter().filter(|&&s| s > 1e-10 * sigma[0]).map(|s| (1.0 - alpha * s * s).abs()).fold(0.0, f64::max);
            prop_assert!(rho < 1.0);
            // the same radius read off the Hermitian matrix P_R(A) − αAA^H
            let m = &(&a * &ap) - &(&a * &a.adjoint()).scale(alpha);
            prop_assert!((spectral_norm(&m).unwrap() - rho).abs() <= 1e-10);
        }
    }

    #[test]
    fn iterates_stay_in_the_range_and_hermitian(seed in any::<u64>()) {
        let a = random_matrix(6, 4, seed);
        let ap = qsvd_pinv(&a, DEFAULT_RANK_TOL).unwrap();
        let af = a.frobenius();
        for method in [Method::Qns, Method::Qsai, Method::Qhpi19, Method::Qrapid(0), Method::Qrapid(2), Method::Qhon(4)] {
            let mut worst: Option<String> = None;
            pinv_observed(&a, &PinvConfig::new(method), |j, x| {
                let ax = &a * x;
                let herm = fro_dist(&ax.adjoint(), &ax).unwrap();
                let range = fro_dist(&(&(&ap * &a) * x), x).unwrap();
                let xf = x.frobenius();
                if herm > 1e-9 * (1.0 + af * xf) || range > 1e-8 * xf {
                    worst.get_or_insert(format!("{method} iterate {j}: herm {herm:e}, range {range:e}"));
                }
            }).unwrap();
            prop_assert!(worst.is_none(), "{}", worst.unwrap());
        }
    }
}

#[test]
fn penrose_examples() {
    let i3 = QMat::identity(3);
    assert_eq!(penrose_errors(&i3, &i3).unwrap().as_array(), [0.0; 4]);
    let a = random_matrix(3, 2, 1);
    let e = penrose_errors(&a, &QMat::zeros(2, 3)).unwrap();
    assert_eq!(e.as_array(), [a.frobenius(), 0.0, 0.0, 0.0]);
    assert!(penrose_errors(&a, &QMat::zeros(3, 2)).is_err());
}

#[test]
fn hyperpower_step_examples() {
    let a = random_matrix(4, 3, 2);
    let ap = qsvd_pinv(&a, DEFAULT_RANK_TOL).unwrap();
    for k in [2, 3, 7] {
        let next = hyperpower_step(&a, &ap, k).unwrap();
        assert!(fro_dist(&next, &ap).unwrap() <= 1e-12 * ap.frobenius());
    }
    let d = QMat::from_fn(2, 2, |r, c| if r == c { Quat::real([1.0, 2.0][r]) } else { Quat::ZERO });
    let alpha = scaling_alpha(&d, AlphaMode::Spectral).unwrap();
    let x0 = d.adjoint().scale(alpha);
    let want = &x0 * &(&d * &x0).scale(-1.0).add_diag(2.0);
    assert!(fro_dist(&hyperpower_step(&d, &x0, 2).unwrap(), &want).unwrap() < 1e-15);
    assert!(hyperpower_step(&d, &x0, 1).is_err());
}

#[test]
fn hyperparameter_coefficients() {
    let hc = HyperCoeffs::new();
    assert!((hc.beta1 + hc.beta2 - 1.0).abs() <= f64::EPSILON);
    assert!((hc.beta1 * hc.beta2 + 1.0).abs() <= 2.0 * f64::EPSILON);
    assert_eq!((hc.a3, hc.b3), (0.5, 0.5));
    for c in hc.gamma_coefficients() {
        assert!((c - 1.0).abs() <= 1e-12);
    }
    // the factors actually evaluated, multiplied out in r = R²
    let mul = |p: &[f64], q: &[f64]| {
        let mut out = vec![0.0; p.len() + q.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    let u = mul(&[1.0, hc.d1, 1.0], &[1.0, hc.d2, 1.0]);
    let v: Vec<f64> = u.iter().enumerate().map(|(i, c)| c + if i == 1 { hc.d3 } else { 0.0 }).collect();
    let w: Vec<f64> = u.iter().enumerate().map(|(i, c)| c + [0.0, hc.e1, hc.e2, 0.0, 0.0][i]).collect();
    for (got, want) in v.iter().zip([1.0, hc.a1, hc.a2, hc.a3, 1.0]) {
        assert!((got - want).abs() <= 1e-12);
    }
    for (got, want) in w.iter().zip([1.0, hc.b1, hc.b2, hc.b3, 1.0]) {
        assert!((got - want).abs() <= 1e-12);
    }
    let mut gamma = mul(&v, &w);
    gamma[1] += hc.c1;
    gamma[2] += hc.c2;
    assert!(gamma.iter().all(|c| (c - 1.0).abs() <= 1e-12), "{gamma:?}");
}

#[test]
fn matmul_counts_per_iteration() {
    let a = random_matrix(4, 4, 3);
    let x = a.adjoint().scale(scaling_alpha(&a, AlphaMode::Spectral).unwrap());
    let cases = [
        (Method::Qns, 2),
        (Method::Qsai, 6),
        (Method::Qhpi19, 7),
        (Method::Qhon(2), 2),
        (Method::Qhon(10), 10),
        (Method::Qhon(19), 19),
    ];
    for (m, want) in cases {
        let tally = MulTally::new(true);
        method_step(m, &a, &x, &tally).unwrap();
        assert_eq!(tally.count(), want, "{m}");
        assert_eq!(m.matmuls_per_iter(), want);
    }
    for n in 0..4 {
        let tally = MulTally::new(true);
        method_step(Method::Qrapid(n), &a, &x, &tally).unwrap();
        assert_eq!(tally.count(), Method::Qrapid(n).matmuls_per_iter());
    }
    let rep = pinv(&a, &PinvConfig { count_matmuls: true, ..PinvConfig::new(Method::Qhpi19) }).unwrap();
    assert_eq!(rep.matmuls, 7 * rep.iterations as u64);
}

fn iterates(a: &QMat, method: Method) -> Vec<QMat> {
    let mut out = Vec::new();
    pinv_observed(a, &PinvConfig::new(method), |_, x| out.push(x.clone())).unwrap();
    out
}

#[test]
fn factorized_and_unfactorized_iterates_agree() {
    let a = random_matrix(6, 6, 21);
    for (fact, plain, tol) in [(Method::Qsai, Method::Qhon(10), 1e-11), (Method::Qhpi19, Method::Qhon(19), 1e-10)] {
        let (f, p) = (iterates(&a, fact), iterates(&a, plain));
        assert_eq!(f.len(), p.len(), "{fact} vs {plain}");
        for (j, (xf, xp)) in f.iter().zip(&p).enumerate() {
            assert!(fro_dist(xf, xp).unwrap() <= tol * xp.frobenius(), "{fact} iterate {j}");
        }
    }
    let (q, h) = (iterates(&a, Method::Qns), iterates(&a, Method::Qhon(2)));
    assert_eq!(q, h);
}

#[test]
fn empirical_orders() {
    let a = well_conditioned(12, 4);
    for (method, k) in [(Method::Qns, 2.0), (Method::Qrapid(0), 5.0), (Method::Qsai, 10.0), (Method::Qhpi19, 19.0)] {
        let order = empirical_order(&a, &PinvConfig::new(method)).unwrap().expect("enough residuals to fit");
        assert!(order >= 0.8 * k, "{method}: fitted order {order:.2} < {:.1}", 0.8 * k);
    }
}

#[test]
fn qns_examples() {
    let rep = qns(&QMat::identity(3), &PinvConfig::new(Method::Qns)).unwrap();
    assert!(rep.iterations <= 2 && rep.converged());
    assert!(fro_dist(&rep.x, &QMat::identity(3)).unwrap() < 1e-14);

    let a = random_matrix(10, 10, 8);
    let rep = qns(&a, &PinvConfig::new(Method::Qns)).unwrap();
    assert!(rep.converged() && rep.penrose.max() <= 1e-8);
    let oracle = qsvd_pinv(&a, DEFAULT_RANK_TOL).unwrap();
    assert!(fro_dist(&rep.x, &oracle).unwrap() <= 1e-8 * oracle.frobenius());

    let a = random_matrix(30, 30, 9);
    let slow = qns(&a, &PinvConfig::new(Method::Qns)).unwrap();
    let fast = qsai(&a, &PinvConfig::new(Method::Qsai)).unwrap();
    assert!(slow.converged() && fast.converged());
    assert!(slow.iterations > fast.iterations, "{} vs {}", slow.iterations, fast.iterations);
}

#[test]
fn identity_is_fixed_for_every_qrapid_depth() {
    for n in 0..4 {
        let i = QMat::identity(4);
        let x1 = one_step(Method::Qrapid(n), &i, &i);
        assert!(fro_dist(&x1, &i).unwrap() < 1e-14);
        let rep = qrapid(&i, n, &PinvConfig::new(Method::Qrapid(n))).unwrap();
        assert!(rep.iterations == 1 && rep.converged());
    }
}

#[test]
fn rank_deficient_convergence() {
    for seed in 0..3 {
        let a = random_low_rank(6, 6, 2, seed);
        for m in [Method::Qns, Method::Qsai, Method::Qhpi19, Method::Qrapid(0), Method::Qrapid(1)] {
            let rep = pinv(&a, &PinvConfig::new(m)).unwrap();
            assert!(rep.converged(), "{m} seed {seed}: {:?} after {}", rep.stop, rep.iterations);
            assert!(rep.penrose.max() <= 1e-8, "{m} seed {seed}: {:?}", rep.penrose);
        }
    }
}

#[test]
fn non_convergence_is_reported() {
    let a = random_matrix(8, 8, 1);
    let rep = pinv(&a, &PinvConfig::new(Method::Qns).with_max_iters(2)).unwrap();
    assert_eq!(rep.stop, StopReason::MaxIters);
    assert!(!rep.converged());
    assert_eq!(rep.step_history.len(), 2);
    assert!(rep.step_history.iter().all(|s| s.is_finite()));
}

#[test]
fn zero_perturbation_is_inert() {
    let a = well_conditioned(8, 2);
    let cfg = PinvConfig::new(Method::Qsai);
    let rec = perturbation_probe(&a, &cfg, 1, 0.0, 3).unwrap();
    assert_eq!((rec.delta_before, rec.delta_after, rec.growth_ratio), (0.0, 0.0, 0.0));
    let plain = pinv(&a, &cfg).unwrap();
    assert_eq!(rec.final_penrose, plain.penrose);
}

#[test]
fn perturbation_growth_respects_the_bounds() {
    for seed in 0..4 {
        let a = well_conditioned(8, seed);
        let ap_norm = qsvd_pinv(&a, DEFAULT_RANK_TOL).unwrap().frobenius();
        for method in [Method::Qsai, Method::Qhpi19, Method::Qns, Method::Qrapid(0)] {
            // inject once the residual is below one half
            let norms = residual_norm_history(&a, &PinvConfig::new(method)).unwrap();
            let j = norms.iter().position(|&r| r < 0.5).expect("residual drops below 1/2");
            let rec = perturbation_probe(&a, &PinvConfig::new(method), j, 1e-6 * ap_norm, seed + 100).unwrap();
            assert!(rec.r_norm < 0.5);
            assert!(rec.growth_ratio <= rec.bound(), "{method}: ratio {} > bound {}", rec.growth_ratio, rec.bound());
            assert!(rec.converged, "{method} after perturbation");
            assert!(rec.final_penrose.max() <= 1e-8);
        }
    }
}
