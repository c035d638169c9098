mod common;

use proptest::prelude::*;
use snapiter::{ConcurrentSet, HashSet, Ubst};

#[test]
fn ubst_matches_model() {
    let set = ConcurrentSet::new(Ubst::new(), 1);
    common::sequential_conformance(&set, 11, 20_000, 256).unwrap();
}

#[test]
fn hashset_matches_model() {
    let set = ConcurrentSet::new(HashSet::new(), 1);
    common::sequential_conformance(&set, 11, 20_000, 256).unwrap();
}

#[test]
fn hashset_through_grow_and_shrink() {
    // wide range forces several doublings, then deletions shrink it back
    let set = ConcurrentSet::new(HashSet::new(), 1);
    let me = set.register().unwrap();
    for k in 0..2000 {
        assert!(set.insert(&me, k));
    }
    assert!(set.adapter().head_size() > 2);
    for k in 0..2000 {
        assert!(set.delete(&me, k));
    }
    assert!(set.iterate(&me).is_empty());
    set.adapter().audit().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ubst_any_seed(seed in any::<u64>(), range in 1i64..64) {
        let set = ConcurrentSet::new(Ubst::new(), 1);
        prop_assert_eq!(common::sequential_conformance(&set, seed, 500, range), Ok(()));
        prop_assert!(set.adapter().audit().is_ok());
    }

    #[test]
    fn hashset_any_seed(seed in any::<u64>(), range in 1i64..64) {
        let set = ConcurrentSet::new(HashSet::new(), 1);
        prop_assert_eq!(common::sequential_conformance(&set, seed, 500, range), Ok(()));
        prop_assert!(set.adapter().audit().is_ok());
    }
}
