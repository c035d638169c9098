mod common;

use proptest::prelude::*;
use snapiter::{CollectorRegistry, ConcurrentSet, Node, SnapCollector, Ubst};

#[test]
fn truth_table() {
    for bits in 0..8u8 {
        let e = [(5, bits & 1 != 0, bits & 2 != 0, bits & 4 != 0)];
        assert_eq!(common::reconstruct_from(&e), common::brute_force_snapshot(&e), "bits {bits:03b}");
    }
}

#[test]
fn delete_names_node_not_key() {
    // a deleted node and a reinserted node with the same key
    let e = [(3, true, false, true), (3, false, true, false)];
    assert_eq!(common::reconstruct_from(&e), vec![3]);
}

#[test]
fn reconstruct_requires_blocking() {
    let c = SnapCollector::new(1);
    let guard = crossbeam_epoch::pin();
    c.add_node(&Node::new(1), false, &guard);
    assert!(c.reconstruct(&guard).is_err());
}

#[test]
fn inactive_collector_drops_evidence() {
    let registry = CollectorRegistry::new(1);
    let me = registry.register().unwrap();
    let c = SnapCollector::new(1);
    let guard = crossbeam_epoch::pin();
    let n = Node::new(4);
    c.block_and_deactivate(&guard);
    assert!(!c.add_node(&n, false, &guard));
    c.report(&me, snapiter::Report::insert(&n), &guard);
    assert!(c.reports(0, &guard).is_empty());
}

#[test]
fn registry_capacity_is_enforced() {
    let set = ConcurrentSet::new(Ubst::new(), 2);
    let _a = set.register().unwrap();
    let _b = set.register().unwrap();
    assert!(set.register().is_err());
}

#[test]
fn iterate_after_updates() {
    let set = ConcurrentSet::new(Ubst::new(), 1);
    let me = set.register().unwrap();
    for k in [9, 3, 7, 1] {
        set.insert(&me, k);
    }
    set.delete(&me, 7);
    assert_eq!(set.iterate(&me).keys(), &[1, 3, 9]);
}

proptest! {
    #[test]
    fn random_evidence(e in prop::collection::vec((0i64..6, any::<bool>(), any::<bool>(), any::<bool>()), 0..24)) {
        prop_assert_eq!(common::reconstruct_from(&e), common::brute_force_snapshot(&e));
    }
}
