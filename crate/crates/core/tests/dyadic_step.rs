use haarfact::dyadic::{universe, DyadicInterval, OmegaIndex};
use haarfact::omega::{conditional_expectation, position_of, universe_len, Partition};
use haarfact::scalar::Rational;
use haarfact::step::{haar_analyze, haar_synthesize, pairing, HaarCoefficients, StepFunction};
use proptest::prelude::*;

fn rational(p: i64, q: i64) -> Rational {
    Rational::new(p.into(), q.into())
}

fn interval() -> impl Strategy<Value = DyadicInterval> {
    (0u32..12).prop_flat_map(|level| (Just(level), 0..1u64 << level)).prop_map(|(l, p)| DyadicInterval::new(l, p).unwrap())
}

proptest! {
    #[test]
    fn iota_round_trips(i in interval()) {
        prop_assert_eq!(DyadicInterval::from_iota(i.iota()).unwrap(), i);
    }

    #[test]
    fn halves_partition_their_parent(i in interval()) {
        let (l, r) = i.halves().unwrap();
        prop_assert_eq!(l.parent(), Some(i));
        prop_assert_eq!(r.parent(), Some(i));
        prop_assert!(i.contains(l) && i.contains(r) && !l.intersects(r));
        prop_assert_eq!(l.measure::<Rational>() + r.measure::<Rational>(), i.measure::<Rational>());
    }

    #[test]
    fn positions_follow_the_universe_order(n_max in 0u32..6) {
        let u = universe(n_max).unwrap();
        prop_assert_eq!(u.len(), universe_len(n_max));
        for (p, idx) in u.indices().iter().enumerate() {
            prop_assert_eq!(position_of(*idx), p);
            prop_assert_eq!(u.get(p), *idx);
        }
    }

    #[test]
    fn analysis_inverts_synthesis(depth in 0u32..6, seed in any::<u64>()) {
        let len = 1usize << (depth + 1);
        let dense: Vec<Rational> = (0..len).map(|k| rational(((seed >> (k % 60)) & 15) as i64 - 7, 1 + (k as i64 % 3))).collect();
        let c = HaarCoefficients::from_dense(depth, true, &dense).unwrap();
        let f = haar_synthesize(&c, depth + 1).unwrap();
        prop_assert_eq!(haar_analyze(&f, true).unwrap().to_dense(), dense);
    }

    #[test]
    fn conditional_expectation_is_a_projection(m in 1u32..7, labels in prop::collection::vec(0usize..5, 64), vals in prop::collection::vec(-20i64..20, 64)) {
        let cells = 1usize << m;
        let f = StepFunction::from_values(m, vals[..cells].iter().map(|v| rational(*v, 3)).collect()).unwrap();
        let mut atoms = vec![Vec::new(); 5];
        for c in 0..cells {
            atoms[labels[c]].push(c as u64);
        }
        let p = Partition::new(m, atoms).unwrap();
        let e = conditional_expectation(&f, &p).unwrap();
        prop_assert_eq!(conditional_expectation(&e, &p).unwrap(), e.clone());
        prop_assert_eq!(e.integral(), f.integral());
        // E is self-adjoint.
        let g = StepFunction::from_values(m, (0..cells).map(|c| rational(c as i64 % 4, 1)).collect()).unwrap();
        let eg = conditional_expectation(&g, &p).unwrap();
        prop_assert_eq!(pairing(&e, &g).unwrap(), pairing(&f, &eg).unwrap());
    }
}

#[test]
fn omega_index_rejects_deep_intervals() {
    assert!(OmegaIndex::new(0, DyadicInterval::new(1, 0).unwrap()).is_err());
    assert!(OmegaIndex::new(3, DyadicInterval::new(3, 7).unwrap()).is_ok());
}
