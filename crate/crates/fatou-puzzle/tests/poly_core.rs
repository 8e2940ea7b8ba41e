use fatou_puzzle::poly_core::{
    aberth_roots, bottcher_external, bottcher_internal, classify, evaluate, green_potential, EscapeStatus,
};
use fatou_puzzle::{Polynomial, C64};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn horner(coeffs: &[f64], z: C64) -> C64 {
    coeffs.iter().rev().fold(c(0.0, 0.0), |acc, &a| acc * z + a)
}

#[test]
fn critical_points_of_cubic() {
    let p = Polynomial::from_real(&[0.0, 0.0, 1.0, 1.0]).unwrap();
    let mut pts: Vec<C64> = p.criticals().iter().map(|k| k.point).collect();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re));
    assert_eq!(pts.len(), 2);
    assert!((pts[0] - c(-2.0 / 3.0, 0.0)).norm() < 1e-12);
    assert!(pts[1].norm() < 1e-12);
}

#[test]
fn double_critical_point() {
    let p = Polynomial::from_real(&[0.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(p.criticals().len(), 1);
    assert_eq!(p.criticals()[0].local_degree, 3);
}

#[test]
fn roots_of_golden_quadratic() {
    let mut r = aberth_roots(&[c(-1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)]);
    r.sort_by(|a, b| a.re.total_cmp(&b.re));
    let s5 = 5f64.sqrt();
    assert!((r[0].re - (1.0 - s5) / 2.0).abs() < 1e-14);
    assert!((r[1].re - (1.0 + s5) / 2.0).abs() < 1e-14);
}

#[test]
fn escape_examples() {
    let p = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
    assert!(matches!(classify(&p, c(0.0, 0.0), 10.0, 200).status, EscapeStatus::Bounded { .. }));
    assert_eq!(classify(&p, c(3.0, 0.0), 10.0, 200).escaped(), Some(2));
}

#[test]
fn green_of_square_is_log_modulus() {
    let p = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
    for z in [c(2.0, 0.0), c(0.3, 1.5), c(-5.0, -5.0)] {
        assert!((green_potential(&p, z).g - z.norm().ln()).abs() < 1e-12);
    }
    assert_eq!(green_potential(&p, c(0.5, 0.0)).g, 0.0);
}

#[test]
fn bottcher_of_square_is_identity() {
    let p = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
    let z = c(1.2, -2.3);
    assert!((bottcher_external(&p, z).unwrap() - z).norm() < 1e-12);
    let w = c(0.3, 0.4);
    assert!((bottcher_internal(&p, c(0.0, 0.0), w).unwrap() - w).norm() < 1e-12);
}

#[test]
fn json_round_trip() {
    let p = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
    let text = serde_json::to_string(&p.to_spec()).unwrap();
    let q = Polynomial::from_json(&text).unwrap();
    assert_eq!(p.coeffs(), q.coeffs());
}

#[test]
fn rejects_constant() {
    assert!(Polynomial::from_real(&[1.0]).is_err());
    assert!(Polynomial::from_real(&[1.0, 2.0]).is_err());
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    (2usize..5).prop_flat_map(|d| {
        prop::collection::vec(-1.0f64..1.0, d).prop_map(|mut v| {
            v.push(1.0);
            v
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_matches_horner(cs in coeffs(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let p = Polynomial::from_real(&cs).unwrap();
        let z = c(re, im);
        let expect = horner(&cs, z);
        prop_assert!((evaluate(&p, z) - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
    }

    #[test]
    fn normalization_round_trip(cs in coeffs(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let p = Polynomial::from_real(&cs).unwrap();
        let z = c(re, im);
        prop_assert!((p.to_user(p.to_normalized(z)) - z).norm() < 1e-12);
        let lhs = p.to_normalized(p.eval(z));
        let rhs = p.eval_norm(p.to_normalized(z));
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn criticals_are_roots_of_derivative(cs in coeffs()) {
        let p = Polynomial::from_real(&cs).unwrap();
        let total: u32 = p.criticals().iter().map(|k| k.local_degree - 1).sum();
        prop_assert_eq!(total as usize, p.degree() - 1);
        for k in p.criticals() {
            prop_assert!(p.eval_deriv(k.point).1.norm() < 1e-6);
        }
    }

    #[test]
    fn green_is_equivariant(cs in coeffs(), re in 1.5f64..4.0, arg in 0.0f64..6.28) {
        let p = Polynomial::from_real(&cs).unwrap();
        let z = C64::from_polar(re * 2.0, arg);
        let g = green_potential(&p, z).g;
        prop_assume!(g > 0.05);
        let gf = green_potential(&p, p.eval(z)).g;
        prop_assert!((gf - p.degree() as f64 * g).abs() < 1e-9 * (1.0 + gf));
    }
}
