use fatou_puzzle::angles::{angle_to_itinerary, itinerary_to_angle, orbit_type, shift, ItineraryWord, RationalAngle};
use proptest::prelude::*;

fn a(p: u64, q: u64) -> RationalAngle {
    RationalAngle::from_u64(p, q).unwrap()
}

#[test]
fn orbit_types() {
    assert_eq!(orbit_type(&a(1, 3), 2), (0, 2));
    assert_eq!(orbit_type(&a(1, 7), 2), (0, 3));
    assert_eq!(orbit_type(&a(1, 6), 2), (1, 2));
    assert_eq!(orbit_type(&a(0, 1), 2), (0, 1));
}

#[test]
fn reduction_and_wrap() {
    assert_eq!(a(2, 6), a(1, 3));
    assert_eq!(a(2, 3).times_base(2), a(1, 3));
    assert_eq!(a(5, 4), a(1, 4));
}

#[test]
fn zero_denominator_is_rejected() {
    assert!(RationalAngle::from_u64(1, 0).is_err());
}

#[test]
fn itinerary_of_one_third() {
    let w = angle_to_itinerary(&a(1, 3), 2, 6).unwrap();
    assert_eq!(w.prefix(6).unwrap(), vec![0, 1, 0, 1, 0, 1]);
    assert_eq!(itinerary_to_angle(&w, 2), Some(a(1, 3)));
}

#[test]
fn dyadic_angle_is_rejected() {
    assert!(angle_to_itinerary(&a(1, 4), 2, 4).is_err());
}

#[test]
fn shift_of_periodic_word() {
    let w = ItineraryWord::periodic(&[0, 1, 1]);
    let s = shift(&w).unwrap();
    assert_eq!(s.prefix(3).unwrap(), vec![1, 1, 0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn times_base_pow_agrees(p in 0u64..1000, q in 1u64..1000, d in 2u32..5, n in 0u32..6) {
        let t = a(p, q);
        let mut u = t.clone();
        for _ in 0..n {
            u = u.times_base(d);
        }
        prop_assert_eq!(t.times_base_pow(d, n), u);
    }

    #[test]
    fn orbit_type_is_exact(p in 0u64..500, q in 1u64..500, d in 2u32..4) {
        let t = a(p, q);
        let (l, k) = orbit_type(&t, d);
        let tl = t.times_base_pow(d, l);
        prop_assert_eq!(tl.times_base_pow(d, k), tl.clone());
        for j in 1..k {
            prop_assert_ne!(tl.times_base_pow(d, j), tl.clone());
        }
        if l > 0 {
            let prev = t.times_base_pow(d, l - 1);
            prop_assert_ne!(prev.times_base_pow(d, k), prev);
        }
    }

    #[test]
    fn itinerary_round_trip(p in 0u64..300, q in 1u64..300, d in 2u32..4) {
        let t = a(p, q);
        prop_assume!(!t.is_d_adic(d));
        let w = angle_to_itinerary(&t, d, 40).unwrap();
        prop_assert_eq!(itinerary_to_angle(&w, d), Some(t.clone()));
        let s = shift(&w).unwrap();
        prop_assert_eq!(itinerary_to_angle(&s, d), Some(t.times_base(d)));
    }

    #[test]
    fn digits_bound_the_angle(p in 0u64..300, q in 1u64..300) {
        let t = a(p, q);
        prop_assume!(!t.is_d_adic(2));
        let digits = angle_to_itinerary(&t, 2, 30).unwrap().prefix(30).unwrap();
        let lo: f64 = digits.iter().enumerate().map(|(i, &e)| e as f64 * 0.5f64.powi(i as i32 + 1)).sum();
        prop_assert!(lo <= t.to_f64() + 1e-12 && t.to_f64() <= lo + 0.5f64.powi(30) + 1e-12);
    }
}
