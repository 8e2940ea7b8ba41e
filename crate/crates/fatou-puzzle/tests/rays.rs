use fatou_puzzle::angles::RationalAngle;
use fatou_puzzle::rays::{
    blaschke_model, cycle_rotation, fatou_coordinate_model, land_external_ray, land_internal_ray, parabolic_tree,
    trace_external_ray, trace_internal_ray, InternalBasin, RayControl,
};
use fatou_puzzle::{Polynomial, C64};
use proptest::prelude::*;
use std::f64::consts::PI;

fn a(p: u64, q: u64) -> RationalAngle {
    RationalAngle::from_u64(p, q).unwrap()
}

#[test]
fn rays_of_square_are_radial() {
    let p = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
    let theta = a(1, 7);
    let ray = trace_external_ray(&p, &theta, 1e-4, &RayControl::default()).unwrap();
    for (t, z) in &ray.samples {
        let expect = C64::from_polar(t.exp(), 2.0 * PI * theta.to_f64());
        assert!((z - expect).norm() < 1e-9 * expect.norm());
    }
}

#[test]
fn zero_ray_of_basilica_lands_at_beta() {
    let p = Polynomial::from_real(&[-1.0, 0.0, 1.0]).unwrap();
    let (_, landing) = land_external_ray(&p, &a(0, 1), &RayControl::default()).unwrap();
    assert!((landing.point - C64::new((1.0 + 5f64.sqrt()) / 2.0, 0.0)).norm() < 1e-8);
    assert_eq!(landing.point_period, 1);
}

#[test]
fn internal_rays_of_square() {
    let p = Polynomial::from_real(&[0.0, 0.0, 1.0]).unwrap();
    let theta = a(1, 3);
    let ray = trace_internal_ray(&p, C64::new(0.0, 0.0), &theta, -1e-3, &RayControl::default()).unwrap();
    for (t, z) in &ray.samples {
        let expect = C64::from_polar(t.exp(), 2.0 * PI * theta.to_f64());
        assert!((z - expect).norm() < 1e-9);
    }
    let basin = InternalBasin::new(&p, C64::new(0.0, 0.0)).unwrap();
    let (_, landing) = land_internal_ray(&basin, &p, &theta, &RayControl::default()).unwrap();
    assert!((landing.point - C64::from_polar(1.0, 2.0 * PI / 3.0)).norm() < 1e-8);
}

#[test]
fn rotation_numbers() {
    assert_eq!(cycle_rotation(&a(1, 3), 2), Some((1, 2)));
    assert_eq!(cycle_rotation(&a(1, 7), 2), Some((1, 3)));
    assert_eq!(cycle_rotation(&a(1, 6), 2), None);
}

#[test]
fn parabolic_tree_levels() {
    let model = blaschke_model(2);
    let tree = parabolic_tree(2, 4).unwrap();
    assert!(tree.max_identity_residual(&model) < 1e-9);
    assert_eq!(tree.levels.len(), 1 + 2 + 4 + 8 + 16);
    assert_eq!(tree.edges().count(), tree.levels.len() - 1);
}

#[test]
fn fatou_coordinate_normalization() {
    assert!(fatou_coordinate_model(2, C64::new(0.0, 0.0)).unwrap().norm() < 1e-12);
    let model = blaschke_model(3);
    let x = model.fatou_inverse_real(2.5).unwrap();
    assert!((model.fatou(C64::new(x, 0.0)).unwrap() - C64::new(2.5, 0.0)).norm() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cubic_rays_are_equivariant(k in 1u32..5, j in 0u64..80) {
        let p = Polynomial::from_real(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        let q = 3u64.pow(k) - 1;
        let theta = a(j % q, q);
        let ctrl = RayControl::default();
        let ray = trace_external_ray(&p, &theta, 1e-3, &ctrl).unwrap();
        for (t, z) in ray.samples.iter().filter(|s| s.0 <= 1.0) {
            let w = fatou_puzzle::rays::external_ray_point(&p, &theta.times_base(3), 3.0 * t, &ctrl).unwrap();
            prop_assert!((p.eval(*z) - w).norm() < 1e-6);
        }
    }
}
