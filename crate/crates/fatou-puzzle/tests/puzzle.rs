use fatou_puzzle::angles::RationalAngle;
use fatou_puzzle::poly_core::aberth_roots;
use fatou_puzzle::puzzle::{build_spec, depth0_atlas, geometry, locate, piece_degree, PieceId, PuzzleError, PuzzleSpec};
use fatou_puzzle::{Polynomial, C64};
use proptest::prelude::*;
use std::collections::HashMap;
use std::sync::OnceLock;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn build(coeffs: &[f64]) -> PuzzleSpec {
    let p = Polynomial::from_real(coeffs).unwrap();
    build_spec(&p, c(0.0, 0.0), &RationalAngle::from_u64(1, 3).unwrap()).unwrap()
}

fn square() -> &'static PuzzleSpec {
    static S: OnceLock<PuzzleSpec> = OnceLock::new();
    S.get_or_init(|| build(&[0.0, 0.0, 1.0]))
}

fn cubic() -> &'static PuzzleSpec {
    static S: OnceLock<PuzzleSpec> = OnceLock::new();
    S.get_or_init(|| build(&[0.0, 0.0, 1.0, 1.0]))
}

/// Preimages of `w` under `f` that lie in the depth-`n` piece `a`, or `None`
/// when one of them sits on the graph.
fn preimages_in(spec: &PuzzleSpec, a: &PieceId, w: C64) -> Option<usize> {
    let mut coeffs = spec.poly.coeffs().to_vec();
    coeffs[0] -= w;
    let mut count = 0;
    for z in aberth_roots(&coeffs) {
        match locate(spec, z, a.depth()) {
            Ok(b) if b == *a => count += 1,
            Ok(_) | Err(PuzzleError::LeftDomain(_)) => {}
            Err(_) => return None,
        }
    }
    Some(count)
}

#[test]
fn square_atlas() {
    let s = square();
    assert_eq!(s.label_count(), 2);
    assert_eq!(s.d, 2);
    assert_eq!(locate(s, c(0.05, 0.0), 3).unwrap().word(), &[s.c0_label(); 4]);
    let atlas = depth0_atlas(s);
    assert_eq!(atlas.pieces.len(), 2);
}

#[test]
fn square_piece_degrees() {
    let s = square();
    let a0 = PieceId::from_vec(vec![s.c0_label()]);
    let other = PieceId::from_vec(vec![1 - s.c0_label()]);
    assert_eq!(piece_degree(s, &a0).unwrap(), 2);
    assert_eq!(piece_degree(s, &other).unwrap(), 1);
}

#[test]
fn cubic_critical_itinerary() {
    let s = cubic();
    let w = locate(s, c(-2.0 / 3.0, 0.0), 3).unwrap();
    assert_eq!(w.to_string(), "B,A,A,A");
}

#[test]
fn transitions_are_complete_for_cubic() {
    assert_eq!(cubic().transitions, vec![vec![true, true], vec![true, true]]);
}

/// `f` maps `P_n` properly onto `P_{n-1}` for `n >= 1`. A word may label several
/// components, each mapping onto one component of the image word, and `c0` sits
/// on the boundary of the pieces `A,…,A`, where the product formula is an upper bound.
#[test]
fn degrees_match_preimage_counts() {
    for s in [square(), cubic()] {
        let mut components: HashMap<PieceId, Option<usize>> = HashMap::new();
        let mut checked = 0;
        for i in 0..40 {
            for j in 0..40 {
                let z = c(-1.5 + 3.0 * i as f64 / 39.0 + 1e-3, -1.5 + 3.0 * j as f64 / 39.0 + 2e-3);
                for n in 1..4 {
                    let Ok(a) = locate(s, z, n) else { continue };
                    let Some(count) = preimages_in(s, &a, s.poly.eval(z)) else { continue };
                    let entry = components.entry(a.clone()).or_insert_with(|| geometry(s, &a, 96).ok().map(|g| g.components));
                    let Some(k) = *entry else { continue };
                    let deg = piece_degree(s, &a).unwrap();
                    let central = a.word().iter().all(|&l| l == s.c0_label());
                    if k == 1 && !central {
                        assert_eq!(count as u64, deg, "{a} at {z}");
                    } else {
                        assert!(count >= 1 && count as u64 <= deg + k as u64 - 1, "{a} at {z}: {count}");
                    }
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn markov_on_cubic(re in -1.6f64..1.6, im in -1.6f64..1.6, n in 1usize..5) {
        let s = cubic();
        let z = c(re, im);
        if let Ok(a) = locate(s, z, n) {
            match locate(s, s.poly.eval(z), n - 1) {
                Ok(b) => prop_assert_eq!(b, a.image().unwrap()),
                Err(e) => prop_assert!(matches!(e, PuzzleError::OnGraph(_)), "{}", e),
            }
        }
    }

    #[test]
    fn pieces_are_nested(re in -1.6f64..1.6, im in -1.6f64..1.6, n in 1usize..5) {
        let s = square();
        let z = c(re, im);
        if let (Ok(deep), Ok(shallow)) = (locate(s, z, n), locate(s, z, n - 1)) {
            prop_assert!(shallow.contains(&deep));
            prop_assert_eq!(deep.truncate(n - 1).unwrap(), shallow);
        }
    }
}

#[test]
fn preimages_are_accounted_for() {
    for s in [square(), cubic()] {
        for i in 0..20 {
            let w = c(-1.0 + 0.1 * i as f64, 0.37);
            let mut coeffs = s.poly.coeffs().to_vec();
            coeffs[0] -= w;
            let roots = aberth_roots(&coeffs);
            assert_eq!(roots.len(), s.poly.degree());
            let Ok(b) = locate(s, w, 1) else { continue };
            for z in roots {
                if let Ok(a) = locate(s, z, 2) {
                    assert_eq!(a.image().unwrap(), b);
                }
            }
        }
    }
}
