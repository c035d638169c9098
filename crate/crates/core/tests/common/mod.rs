//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snapiter::harness::history::{Call, Operation, Ret};
use snapiter::{ConcurrentSet, Key, SetAdapter};

/// Replays `n` seeded single-threaded operations against `set` and a
/// `BTreeSet` model. Returns the first disagreement.
pub fn sequential_conformance<A: SetAdapter>(set: &ConcurrentSet<A>, seed: u64, n: usize, range: Key) -> Result<(), String> {
    let me = set.register().map_err(|e| e.to_string())?;
    let mut model = BTreeSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let k = rng.gen_range(0..range);
        let roll = rng.gen_range(0..100);
        let (what, got, want) = if roll < 35 {
            ("insert", set.insert(&me, k), model.insert(k))
        } else if roll < 70 {
            ("delete", set.delete(&me, k), model.remove(&k))
        } else if roll < 98 {
            ("contains", set.contains(&me, k), model.contains(&k))
        } else {
            let snap = set.iterate(&me);
            if !snap.keys().iter().eq(model.iter()) {
                return Err(format!("op {i}: iterate gave {:?}, model {:?}", snap.keys(), model));
            }
            continue;
        };
        if got != want {
            return Err(format!("op {i}: {what}({k}) returned {got}, model {want}"));
        }
    }
    let snap = set.iterate(&me);
    if !snap.keys().iter().eq(model.iter()) {
        return Err("final iterate differs from the model".into());
    }
    Ok(())
}

/// Evidence for one node: (key, collected, insert-reported, delete-reported).
pub type Evidence = (Key, bool, bool, bool);

/// Brute-force snapshot: a key is present iff some node carrying it is
/// (collected or insert-reported) and not delete-reported.
pub fn brute_force_snapshot(nodes: &[Evidence]) -> Vec<Key> {
    let mut out = BTreeSet::new();
    for &(k, c, i, d) in nodes {
        if (c || i) && !d {
            out.insert(k);
        }
    }
    out.into_iter().collect()
}

/// Whether some permutation of `ops` respects real-time order and replays on
/// an empty set with the recorded results. Tries all `n!` orders.
pub fn permutation_oracle(ops: &[Operation]) -> bool {
    let mut idx: Vec<usize> = (0..ops.len()).collect();
    permute(&mut idx, 0, ops)
}

fn permute(idx: &mut Vec<usize>, at: usize, ops: &[Operation]) -> bool {
    if at == idx.len() {
        return valid_order(idx, ops);
    }
    for i in at..idx.len() {
        idx.swap(at, i);
        if permute(idx, at + 1, ops) {
            return true;
        }
        idx.swap(at, i);
    }
    false
}

fn valid_order(order: &[usize], ops: &[Operation]) -> bool {
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if ops[j].responded < ops[i].invoked {
                return false;
            }
        }
    }
    let mut state: BTreeSet<Key> = BTreeSet::new();
    order.iter().all(|&i| {
        let op = &ops[i];
        match (&op.call, &op.ret) {
            (Call::Insert(k), Ret::Bool(r)) => state.insert(*k) == *r,
            (Call::Delete(k), Ret::Bool(r)) => state.remove(k) == *r,
            (Call::Contains(k), Ret::Bool(r)) => state.contains(k) == *r,
            (Call::Iterate, Ret::Keys(keys)) => state.iter().copied().collect::<Vec<_>>() == *keys,
            _ => false,
        }
    })
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Groups evidence by key, for messages.
pub fn describe(nodes: &[Evidence]) -> BTreeMap<Key, Vec<(bool, bool, bool)>> {
    let mut m: BTreeMap<Key, Vec<_>> = BTreeMap::new();
    for &(k, c, i, d) in nodes {
        m.entry(k).or_default().push((c, i, d));
    }
    m
}

/// Feeds `nodes` through a real collector (one fresh node per entry), blocks
/// it and returns the reconstructed keys.
pub fn reconstruct_from(nodes: &[Evidence]) -> Vec<Key> {
    use snapiter::{CollectorRegistry, Node, Report, SnapCollector};
    let registry = CollectorRegistry::new(1);
    let me = registry.register().unwrap();
    let collector = SnapCollector::new(1);
    let guard = crossbeam_epoch::pin();
    let owned: Vec<Node> = nodes.iter().map(|&(k, ..)| Node::new(k)).collect();
    for (node, &(_, c, i, d)) in owned.iter().zip(nodes) {
        if c {
            collector.add_node(node, false, &guard);
        }
        if i {
            collector.report(&me, Report::insert(node), &guard);
        }
        if d {
            collector.report(&me, Report::delete(node), &guard);
        }
    }
    collector.block_and_deactivate(&guard);
    collector.reconstruct(&guard).unwrap().into_keys()
}
