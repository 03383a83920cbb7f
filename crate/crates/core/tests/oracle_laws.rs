mod common;

use proptest::prelude::*;

use nsgraph::oracle::OracleError;
use nsgraph::{FilterOracle, IndexSet, Membership};

fn set() -> impl Strategy<Value = IndexSet> {
    (prop::collection::vec(any::<bool>(), 0..5), prop::collection::vec(any::<bool>(), 1..=12))
        .prop_map(|(pre, cycle)| IndexSet::periodic(pre, cycle))
}

fn finite() -> impl Strategy<Value = IndexSet> {
    prop::collection::btree_set(0u64..200, 0..12).prop_map(IndexSet::finite)
}

/// The default oracle, a tower override, or a pinned residue class.
fn any_oracle() -> impl Strategy<Value = FilterOracle> {
    prop_oneof![
        Just(FilterOracle::new()),
        (2u64..=12).prop_flat_map(|m| (Just(m), 0..m)).prop_map(|(m, r)| FilterOracle::with_tower(&[(m, r)]).unwrap()),
        (2u64..=12)
            .prop_flat_map(|m| (Just(m), 0..m))
            .prop_map(|(m, r)| FilterOracle::new().pinned(IndexSet::residue(m, r), Membership::In).unwrap()),
    ]
}

fn is_in(o: &FilterOracle, s: &IndexSet) -> bool {
    o.decide(s).unwrap().is_in()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn complementarity(o in any_oracle(), s in set()) {
        prop_assert_ne!(is_in(&o, &s), is_in(&o, &s.complement()));
    }

    #[test]
    fn superset_closure(o in any_oracle(), s in set(), t in set()) {
        let sup = s.union(&t);
        if is_in(&o, &s) {
            prop_assert!(is_in(&o, &sup));
        }
    }

    #[test]
    fn finite_intersection_closure(o in any_oracle(), s in set(), t in set(), u in set()) {
        if is_in(&o, &s) && is_in(&o, &t) && is_in(&o, &u) {
            prop_assert!(is_in(&o, &s.intersection(&t).intersection(&u)));
        }
    }

    #[test]
    fn nonprincipal(o in any_oracle(), f in finite()) {
        prop_assert!(!is_in(&o, &f));
        prop_assert!(is_in(&o, &f.complement()));
        prop_assert!(is_in(&o, &IndexSet::all()));
    }

    #[test]
    fn finite_changes_do_not_matter(o in any_oracle(), s in set(), f in finite()) {
        let v = is_in(&o, &s);
        prop_assert_eq!(is_in(&o, &s.union(&f)), v);
        prop_assert_eq!(is_in(&o, &s.difference(&f)), v);
    }

    #[test]
    fn partition_selects_exactly_one(o in any_oracle(), m in 1u64..=8, seed in any::<u64>()) {
        // Random grouping of the residues mod m into at most 8 parts.
        let mut r = common::rng(seed);
        let parts = random_partition(&mut r, m);
        let k = o.select_from_partition(&parts).unwrap();
        let verdicts: Vec<bool> = parts.iter().map(|p| is_in(&o, p)).collect();
        prop_assert_eq!(verdicts.iter().filter(|&&v| v).count(), 1);
        prop_assert!(verdicts[k]);
    }

    #[test]
    fn pins_keep_the_laws(s in set(), t in set(), v in any::<bool>()) {
        let verdict = Membership::from_bool(v);
        match FilterOracle::new().pinned(s.clone(), verdict) {
            Ok(o) => {
                prop_assert_eq!(o.decide(&s).unwrap(), verdict);
                prop_assert_ne!(is_in(&o, &t), is_in(&o, &t.complement()));
                if is_in(&o, &s) && is_in(&o, &t) {
                    prop_assert!(is_in(&o, &s.intersection(&t)));
                }
            }
            Err(OracleError::InconsistentPin { .. }) => {
                // Only a set with no infinite part can refuse In, and only
                // a cofinite one can refuse Out.
                if v {
                    prop_assert_eq!(s.is_infinite(), Some(false));
                } else {
                    prop_assert_eq!(s.complement().is_infinite(), Some(false));
                }
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

fn random_partition(r: &mut impl rand::Rng, m: u64) -> Vec<IndexSet> {
    let parts = r.random_range(1..=m.min(8)) as usize;
    let mut owner: Vec<usize> = (0..m).map(|i| if (i as usize) < parts { i as usize } else { r.random_range(0..parts) }).collect();
    // Shuffle which residue class lands where.
    use rand::seq::SliceRandom;
    owner.shuffle(r);
    (0..parts)
        .filter(|p| owner.contains(p))
        .map(|p| IndexSet::periodic(Vec::new(), owner.iter().map(|&o| o == p).collect()))
        .collect()
}

#[test]
fn reference_decisions() {
    let o = FilterOracle::new();
    assert_eq!(o.decide(&IndexSet::finite(0..10)).unwrap(), Membership::Out);
    assert_eq!(o.decide(&IndexSet::evens()).unwrap(), Membership::In);
    assert_eq!(o.decide(&IndexSet::odds()).unwrap(), Membership::Out);
    assert_eq!(o.decide(&IndexSet::all()).unwrap(), Membership::In);
    let p = FilterOracle::new().pinned(IndexSet::odds(), Membership::In).unwrap();
    assert_eq!(p.decide(&IndexSet::evens()).unwrap(), Membership::Out);
    assert!(matches!(
        FilterOracle::new().pinned(IndexSet::finite([0, 1, 2]), Membership::In),
        Err(OracleError::InconsistentPin { .. })
    ));
    assert!(matches!(
        FilterOracle::new()
            .pinned(IndexSet::evens(), Membership::In)
            .unwrap()
            .pinned(IndexSet::odds(), Membership::In),
        Err(OracleError::InconsistentPin { .. })
    ));
    assert_eq!(o.select_from_partition(&[IndexSet::evens(), IndexSet::odds()]).unwrap(), 0);
    assert_eq!(o.select_from_partition(&[IndexSet::all()]).unwrap(), 0);
    let thirds: Vec<IndexSet> = (0..3).map(|r| IndexSet::residue(3, r)).collect();
    assert_eq!(o.select_from_partition(&thirds).unwrap(), 0);
}
