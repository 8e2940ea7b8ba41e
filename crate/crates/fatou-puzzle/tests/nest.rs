use fatou_puzzle::nest::{
    bicritical_model, build_pc, children, classify_recurrence, enhanced_nest, entrance_from, fibonacci_model,
    fibonacci_word, first_entrance, piece_return_time, return_time, successors, CriticalOrbitTable, NestError,
    Recurrence, ReturnTime,
};
use fatou_puzzle::puzzle::PieceId;
use proptest::prelude::*;
use std::sync::OnceLock;

fn fib() -> &'static CriticalOrbitTable {
    static T: OnceLock<CriticalOrbitTable> = OnceLock::new();
    T.get_or_init(|| fibonacci_model(20_000))
}

fn bi() -> &'static CriticalOrbitTable {
    static T: OnceLock<CriticalOrbitTable> = OnceLock::new();
    T.get_or_init(|| bicritical_model(20_000))
}

fn brute_return(w: &[u8]) -> Option<usize> {
    (1..w.len()).find(|&k| w[k..] == w[..w.len() - k])
}

fn brute_entrance(itin: &[u8], target: &[u8], from: usize) -> Option<usize> {
    (from..itin.len()).find(|&r| itin[r..].starts_with(target))
}

fn piece(t: &CriticalOrbitTable, e: usize, depth: usize) -> PieceId {
    PieceId::from_vec(t.itinerary(e)[..=depth].to_vec())
}

#[test]
fn fibonacci_substitution() {
    let w = fibonacci_word(13);
    assert_eq!(w, vec![0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1]);
}

#[test]
fn fibonacci_returns_are_fibonacci_numbers() {
    let t = fib();
    let mut seen = Vec::new();
    for depth in 2..40 {
        let r = return_time(&piece(t, 0, depth)).exact().unwrap();
        if seen.last() != Some(&r) {
            seen.push(r);
        }
    }
    assert_eq!(seen[..6], [2, 3, 5, 8, 13, 21]);
}

#[test]
fn return_time_of_unbordered_word() {
    let a = PieceId::from_vec(vec![0, 0, 1]);
    assert_eq!(return_time(&a), ReturnTime::AtLeast(3));
    assert_eq!(piece_return_time(fib(), &a), ReturnTime::Exact(3));
}

#[test]
fn entrance_beyond_horizon() {
    let err = first_entrance(&[0, 0, 0], &PieceId::from_vec(vec![1])).unwrap_err();
    assert!(matches!(err, NestError::HorizonExceeded { .. }));
}

#[test]
fn unicritical_pc_is_the_base_piece() {
    let t = fib();
    let i = piece(t, 0, 3);
    let pc = build_pc(t, &i, 0, 4).unwrap();
    let e = pc.entry(0).unwrap();
    assert_eq!(e.p, i);
    assert_eq!(e.time, 0);
    assert_eq!(e.degree, 1);
    assert!(pc.within_bounds);
}

#[test]
fn fibonacci_is_persistently_recurrent() {
    let rec = classify_recurrence(fib(), 0, 4).unwrap();
    assert!(matches!(rec, Recurrence::PersistentlyRecurrentEvidence { .. }));
}

#[test]
fn short_table_is_inconclusive() {
    let t = fibonacci_model(10);
    assert!(matches!(classify_recurrence(&t, 0, 4), Err(NestError::Inconclusive(_))));
}

#[test]
fn nest_stages_are_nested() {
    let t = fib();
    let nest = enhanced_nest(t, 0, &piece(t, 0, 0), Some(1), 6, 4).unwrap();
    assert!(nest.stages.len() >= 3);
    for w in nest.stages.windows(2) {
        assert!(w[0].word_k.contains(&w[1].word_k));
        assert!(w[1].word_k_prime.contains(&w[1].word_k));
        assert!(w[1].h > w[0].h);
    }
    assert!(nest.checks.all(), "{:?}", nest.checks.failures);
}

#[test]
fn nest_json_is_stable() {
    let t = fib();
    let a = enhanced_nest(t, 0, &piece(t, 0, 0), Some(1), 4, 4).unwrap();
    let b = enhanced_nest(t, 0, &piece(t, 0, 0), Some(1), 4, 4).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let text = serde_json::to_string(&a).unwrap();
    assert!(text.contains("\"h'\"") && text.contains("\"word_K'\""));
}

#[test]
fn bicritical_has_two_ends() {
    let t = bi();
    assert_eq!(t.b(), 2);
    assert_eq!(t.delta(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn return_time_matches_brute_force(w in prop::collection::vec(0u8..3, 1..40)) {
        let got = return_time(&PieceId::from_vec(w.clone()));
        match brute_return(&w) {
            Some(k) => prop_assert_eq!(got, ReturnTime::Exact(k)),
            None => prop_assert_eq!(got, ReturnTime::AtLeast(w.len())),
        }
    }

    #[test]
    fn entrance_matches_brute_force(
        itin in prop::collection::vec(0u8..2, 1..200),
        target in prop::collection::vec(0u8..2, 1..5),
        from in 0usize..20,
    ) {
        match (entrance_from(&itin, &target, from), brute_entrance(&itin, &target, from)) {
            (Ok(e), Some(r)) => {
                prop_assert_eq!(e.time, r);
                prop_assert_eq!(e.piece.word(), &itin[..r + target.len()]);
            }
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }

    #[test]
    fn visits_match_brute_force(start in 0usize..5000, len in 1usize..60, steps in 0usize..60) {
        let t = bi();
        let w = &t.itinerary(1)[start..start + len];
        let v = t.visits(w, steps);
        for e in 0..t.b() {
            let it = t.itinerary(e);
            let brute = (0..steps.min(len)).filter(|&i| it.starts_with(&w[i..])).count();
            prop_assert_eq!(v[e], brute);
        }
    }

    #[test]
    fn successors_map_onto_the_piece(depth in 0usize..25, which in 0usize..2) {
        let t = if which == 0 { fib() } else { bi() };
        let e = depth % t.b();
        let a = piece(t, e, depth);
        let list = successors(t, &a).unwrap();
        let mut last = 0;
        for s in &list.successors {
            prop_assert_eq!(&s.piece.word()[s.k..], a.word());
            prop_assert!(a.contains(&s.piece));
            prop_assert!(s.k > last);
            last = s.k;
        }
        let kids = children(t, &a).unwrap();
        for c in &kids.children {
            prop_assert!(list.successors.iter().any(|s| s.piece == c.piece));
        }
    }

    #[test]
    fn return_successor_inequalities(depth in 0usize..30) {
        let t = fib();
        let a = piece(t, 0, depth);
        let list = successors(t, &a).unwrap();
        if let (true, Some((d, sigma))) = (list.stable, list.last()) {
            let r = piece_return_time(t, &a).exact().unwrap();
            let rd = piece_return_time(t, d).exact().unwrap();
            prop_assert!(rd >= sigma && sigma >= 2 * r);
        }
    }
}
