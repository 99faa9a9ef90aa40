mod common;

use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::Rng;

use common::{max_abs_diff, random_vec, seeded};
use resonance::curves::{self, CurveProblem};
use resonance::linear::{self, PeriodicSystem, VerdictKind};
use resonance::pendulum::{self, PendulumProblem};
use resonance::scalar::{self, ScalarProblem};
use resonance::smatrix::{self, DenseMatrix};
use resonance::{Expression, OdeOptions, Tolerances};

fn atan_scalar(nu: f64, a: &str) -> ScalarProblem {
    ScalarProblem::parse(a, &format!("{nu} + sin(t)"), "(2/pi)*atan(x)", (-1.0, 1.0), TAU, true).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn liouville_determinant(seed in 0u64..10_000, n in 1usize..=4) {
        let sys = linear::random_trigonometric_system(&mut seeded(seed), n, 0.2, 0.4);
        let xp = linear::fundamental_matrix(&sys, TAU, &OdeOptions::default()).unwrap();
        let expected = sys.trace_integral().unwrap().exp();
        prop_assert!((xp.determinant() - expected).abs() <= 1e-7 * expected);
    }

    #[test]
    fn rank_plus_nullity(seed in 0u64..10_000, n in 1usize..=5, r in 0usize..=5) {
        let r = r.min(n);
        let mut rng = seeded(seed);
        // product of n×r and r×n Gaussian-ish factors has rank r
        let u = DenseMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        let v = DenseMatrix::from_fn(r, n, |_, _| rng.gen_range(-1.0..1.0));
        let m = if r == 0 { DenseMatrix::zeros(n, n) } else { u.mul(&v) };
        let kernel = smatrix::null_space(&m, 1e-9);
        let rank = smatrix::Svd::new(&m).rank(1e-9 * m.norm().max(1.0));
        prop_assert_eq!(rank, r);
        prop_assert_eq!(kernel.len() + rank, n);
        for k in &kernel {
            prop_assert!(smatrix::norm2(&m.mul_vec(k)) < 1e-8);
        }
    }

    #[test]
    fn scalar_orbit_identity(nu in -0.9f64..0.9, amp in 0.0f64..1.5) {
        let p = atan_scalar(nu, &format!("{amp}*sin(t)"));
        let orbit = scalar::find_periodic(&p).unwrap();
        let value = scalar::landesman_lazer_interval(&p).unwrap().value;
        prop_assert!(orbit.closure <= 1e-9);
        prop_assert!((orbit.g_weighted - value).abs() <= 1e-7, "{} vs {}", orbit.g_weighted, value);
    }

    #[test]
    fn poincare_map_preserves_order(nu in -1.5f64..1.5, x0 in -20.0f64..20.0, dx in 1e-3f64..5.0) {
        let p = atan_scalar(nu, "sin(t)");
        let a = scalar::poincare_map(&p, x0).unwrap();
        let b = scalar::poincare_map(&p, x0 + dx).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn pendulum_orbit_identity(mu in -0.9f64..0.9) {
        let p = PendulumProblem::parse(1.0, "(2/pi)*atan(x)", 1.0, (-1.0, 1.0), mu, "sin(t)", TAU).unwrap();
        let orbit = pendulum::find_periodic_2d(&p, [0.0, 0.0]).unwrap();
        prop_assert!(orbit.identity_defect <= 1e-7);
        prop_assert!(orbit.closure <= 1e-8);
    }

    #[test]
    fn curve_orbit_norms(xi in -8.0f64..8.0) {
        let p = CurveProblem::parse_first_order(None, "(2/pi)*atan(x)", "sin(t) + 0.5*cos(2*t)", TAU).unwrap();
        let orbit = curves::solve_orbit_at_xi(&p, xi, None).unwrap();
        let norms = curves::orbit_norms(&p, &orbit).unwrap();
        prop_assert!(norms.wirtinger);
        prop_assert_eq!(norms.energy, Some(true));
        prop_assert!(curves::shooting_check(&p, &orbit).unwrap().closure <= 1e-7);
    }
}

#[test]
fn solutions_contract_under_increasing_g() {
    let p = atan_scalar(0.4, "sin(t)");
    let mut rng = seeded(7);
    for _ in 0..5 {
        let (mut a, mut b) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let mut gap = f64::abs(a - b);
        for _ in 0..15 {
            a = scalar::poincare_map(&p, a).unwrap();
            b = scalar::poincare_map(&p, b).unwrap();
            let next = f64::abs(a - b);
            assert!(next <= gap * (1.0 + 1e-9) + 1e-12);
            gap = next;
        }
    }
}

#[test]
fn unbounded_verdicts_escape() {
    for nu in [1.2, -1.2, 1.5] {
        let p = atan_scalar(nu, "sin(t)");
        assert_eq!(scalar::scalar_verdict(&p).unwrap().kind, scalar::ScalarVerdictKind::AllUnbounded);
        let mut rng = seeded(nu.to_bits());
        for _ in 0..3 {
            let x0: f64 = rng.gen_range(-5.0..5.0);
            let xs = scalar::poincare_iterates(&p, x0, 200).unwrap();
            assert!(xs.iter().any(|x| x.abs() > 10.0 * x0.abs() + 10.0), "nu = {nu}, x0 = {x0}");
        }
    }
}

#[test]
fn case_1_grows_and_case_2iii_stays_bounded() {
    let opts = OdeOptions::default();
    let tol = Tolerances::default();
    let case1 = PeriodicSystem::parse(TAU, &[&["0", "1"], &["-1", "0"]], &["0", "sin(t)"]).unwrap();
    let rep = linear::monodromy_report(&case1, &tol).unwrap();
    assert_eq!(linear::classify(&rep).kind, VerdictKind::Case1AllUnbounded);
    let mut rng = seeded(11);
    for _ in 0..3 {
        let x0 = random_vec(&mut rng, 2, 1.0);
        let xs = case1.period_iterates(&x0, 40, &opts).unwrap();
        assert!(smatrix::norm2(xs.last().unwrap()) > 10.0 * smatrix::norm2(&x0));
    }

    let block = PeriodicSystem::parse(
        TAU,
        &[&["0", "0", "0"], &["0", "0", "1"], &["0", "-0.25", "0"]],
        &["sin(t)", "0", "0"],
    )
    .unwrap();
    let rep = linear::monodromy_report(&block, &tol).unwrap();
    assert_eq!(linear::classify(&rep).kind, VerdictKind::Case2iiiAllBounded);
    for _ in 0..3 {
        let x0 = random_vec(&mut rng, 3, 1.0);
        // x1 moves by 1 - cos t; x2² /4 + x3² is conserved
        let radius = x0[0].abs() + 2.0 + (5.0 * (x0[1] * x0[1] / 4.0 + x0[2] * x0[2])).sqrt();
        let xs = block.period_iterates(&x0, 40, &opts).unwrap();
        assert!(xs.iter().all(|x| smatrix::norm2(x) <= radius));
    }
}

#[test]
fn expression_derivatives_match_differences() {
    let mut rng = seeded(5);
    for src in ["sin(x)*exp(-x^2/3)", "atan(2*x) + x^3/10", "sqrt(1 + x^2)*cos(x)", "tanh(x)/(2 + sin(x))"] {
        let e = Expression::parse(src, &["x"]).unwrap();
        let d = e.differentiate("x").unwrap();
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-3.0..3.0);
            let h = 1e-6;
            let fd = (e.eval(&[x + h]).unwrap() - e.eval(&[x - h]).unwrap()) / (2.0 * h);
            let exact = d.eval(&[x]).unwrap();
            assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{src} at {x}");
        }
        let again = Expression::parse(&e.to_string(), &["x"]).unwrap();
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-3.0..3.0);
            assert!(max_abs_diff(&[e.eval(&[x]).unwrap()], &[again.eval(&[x]).unwrap()]) <= 1e-12);
        }
    }
}
