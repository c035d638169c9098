//! The snap-collector: shared state through which iterators build one
//! snapshot and updaters report the nodes they touched.

use std::collections::HashSet as StdHashSet;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crossbeam_epoch::{Atomic, Guard, Owned};
use serde::{Deserialize, Serialize};

use crate::append_list::AppendList;
use crate::error::{Error, Result};
use crate::node::{Key, Node, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Insert,
    Delete,
}

/// A record that an operation observed `node` inserted or deleted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Report {
    pub node: NodeId,
    pub key: Key,
    pub kind: ReportKind,
}

impl Report {
    pub fn insert(node: &Node) -> Self {
        Report {
            node: node.id(),
            key: node.key(),
            kind: ReportKind::Insert,
        }
    }

    pub fn delete(node: &Node) -> Self {
        Report {
            node: node.id(),
            key: node.key(),
            kind: ReportKind::Delete,
        }
    }
}

/// An entry of the snapshot-list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Collected {
    pub key: Key,
    pub node: NodeId,
}

impl From<&Node> for Collected {
    fn from(n: &Node) -> Self {
        Collected {
            key: n.key(),
            node: n.id(),
        }
    }
}

/// The keys returned by one iteration: ascending, without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Snapshot {
    keys: Vec<Key>,
}

impl Snapshot {
    pub fn from_keys(mut keys: Vec<Key>) -> Self {
        keys.sort_unstable();
        keys.dedup();
        Snapshot { keys }
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn into_keys(self) -> Vec<Key> {
        self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: Key) -> bool {
        self.keys.binary_search(&key).is_ok()
    }
}

/// Applies the merge rule to blocked evidence.
///
/// A node belongs to the snapshot iff it was collected or insert-reported, and
/// no delete report names it. Membership is decided per node identity; the
/// result is projected to keys.
pub fn merge_evidence<'a>(
    collected: &[Collected],
    reports: impl IntoIterator<Item = &'a Report>,
) -> Snapshot {
    let mut candidates: Vec<Collected> = collected.to_vec();
    candidates.sort_unstable();
    candidates.dedup_by_key(|c| c.node);

    let mut deleted = StdHashSet::new();
    for r in reports {
        match r.kind {
            ReportKind::Insert => candidates.push(Collected {
                key: r.key,
                node: r.node,
            }),
            ReportKind::Delete => {
                deleted.insert(r.node);
            }
        }
    }
    Snapshot::from_keys(
        candidates
            .into_iter()
            .filter(|c| !deleted.contains(&c.node))
            .map(|c| c.key)
            .collect(),
    )
}

/// Shared snapshot-building object.
///
/// `active` only goes from true to false. After
/// [`block_and_deactivate`](SnapCollector::block_and_deactivate) returns, the
/// snapshot-list and every report-list are sealed.
pub struct SnapCollector {
    active: AtomicBool,
    nodes: AppendList<Collected>,
    reports: Box<[AppendList<Report>]>,
    cas_failures: AtomicU64,
}

impl SnapCollector {
    pub fn new(threads: usize) -> Self {
        SnapCollector {
            active: AtomicBool::new(true),
            nodes: AppendList::new(),
            reports: (0..threads).map(|_| AppendList::new()).collect(),
            cas_failures: AtomicU64::new(0),
        }
    }

    pub fn threads(&self) -> usize {
        self.reports.len()
    }

    pub fn is_active(&self) -> bool {
        self.active.load(Ordering::SeqCst)
    }

    /// Appends `node` to the snapshot-list.
    ///
    /// Returns whether the node is now represented in the list. With
    /// `sorted_append`, a node whose key does not exceed the last collected key
    /// is skipped and counts as represented, since an iterator further along the
    /// same ordered traversal has already passed it.
    pub fn add_node(&self, node: &Node, sorted_append: bool, guard: &Guard) -> bool {
        if !self.is_active() {
            return false;
        }
        let entry = Collected::from(node);
        let out = if sorted_append {
            self.nodes.append_unless(entry, guard, |last| last.key >= entry.key)
        } else {
            self.nodes.append(entry, guard)
        };
        if out.cas_failures > 0 {
            self.cas_failures.fetch_add(out.cas_failures, Ordering::Relaxed);
        }
        out.accepted
    }

    /// Appends `report` to `thread`'s report-list; dropped if the collector is
    /// inactive or that list is blocked.
    pub fn report(&self, thread: &ThreadHandle, report: Report, guard: &Guard) {
        self.report_as(thread.index(), report, guard)
    }

    pub(crate) fn report_as(&self, thread: usize, report: Report, guard: &Guard) {
        if !self.is_active() {
            return;
        }
        if let Some(list) = self.reports.get(thread) {
            list.append(report, guard);
        }
    }

    pub fn block_and_deactivate(&self, guard: &Guard) {
        self.active.store(false, Ordering::SeqCst);
        self.nodes.block(guard);
        for list in self.reports.iter() {
            list.block(guard);
        }
    }

    pub fn is_blocked(&self, guard: &Guard) -> bool {
        !self.is_active()
            && self.nodes.is_sealed(guard)
            && self.reports.iter().all(|l| l.is_sealed(guard))
    }

    pub fn nodes_blocked(&self) -> bool {
        self.nodes.is_blocked()
    }

    pub fn reports_blocked(&self, thread: usize) -> bool {
        self.reports.get(thread).is_some_and(|l| l.is_blocked())
    }

    pub fn collected(&self, guard: &Guard) -> Vec<Collected> {
        self.nodes.to_vec(guard)
    }

    pub fn reports(&self, thread: usize, guard: &Guard) -> Vec<Report> {
        self.reports
            .get(thread)
            .map(|l| l.to_vec(guard))
            .unwrap_or_default()
    }

    /// Failed snapshot-list CASes observed by `add_node` on this collector.
    pub fn cas_failures(&self) -> u64 {
        self.cas_failures.load(Ordering::Relaxed)
    }

    /// Builds the final snapshot from the sealed lists.
    pub fn reconstruct(&self, guard: &Guard) -> Result<Snapshot> {
        if !self.is_blocked(guard) {
            return Err(Error::ContractViolation(
                "reconstruct called before the collector was blocked".into(),
            ));
        }
        let collected = self.collected(guard);
        let mut reports = Vec::new();
        for list in self.reports.iter() {
            list.for_each(guard, |r| reports.push(*r));
        }
        Ok(merge_evidence(&collected, &reports))
    }
}

/// A registered thread. Owns one report-list slot in every collector.
#[derive(Debug)]
pub struct ThreadHandle {
    index: usize,
}

impl ThreadHandle {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// The global collector slot plus dense thread registration.
pub struct CollectorRegistry {
    slot: Atomic<SnapCollector>,
    capacity: usize,
    registered: AtomicUsize,
    retired_cas_failures: AtomicU64,
}

impl CollectorRegistry {
    pub fn new(capacity: usize) -> Self {
        CollectorRegistry {
            slot: Atomic::null(),
            capacity,
            registered: AtomicUsize::new(0),
            retired_cas_failures: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Hands out the next dense thread index.
    pub fn register(&self) -> Result<ThreadHandle> {
        let mut cur = self.registered.load(Ordering::Relaxed);
        loop {
            if cur >= self.capacity {
                return Err(Error::RegistryFull {
                    capacity: self.capacity,
                });
            }
            match self.registered.compare_exchange_weak(
                cur,
                cur + 1,
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return Ok(ThreadHandle { index: cur }),
                Err(actual) => cur = actual,
            }
        }
    }

    /// The active collector, or `None`. Never installs one.
    pub fn read<'g>(&self, guard: &'g Guard) -> Option<&'g SnapCollector> {
        let c = self.slot.load(Ordering::SeqCst, guard);
        // SAFETY: installed collectors are retired through the epoch collector
        // and `guard` is pinned
        unsafe { c.as_ref() }.filter(|c| c.is_active())
    }

    /// Returns the active collector, installing a fresh one if there is none.
    /// Threads racing on the slot all end up with the CAS winner's collector.
    pub fn acquire<'g>(&self, guard: &'g Guard) -> &'g SnapCollector {
        let mut fresh: Option<Owned<SnapCollector>> = None;
        loop {
            let cur = self.slot.load(Ordering::SeqCst, guard);
            // SAFETY: see `read`
            if let Some(c) = unsafe { cur.as_ref() } {
                if c.is_active() {
                    return c;
                }
            }
            let new = fresh
                .take()
                .unwrap_or_else(|| Owned::new(SnapCollector::new(self.capacity)));
            match self
                .slot
                .compare_exchange(cur, new, Ordering::SeqCst, Ordering::SeqCst, guard)
            {
                Ok(installed) => {
                    if !cur.is_null() {
                        // SAFETY: `cur` is unreachable from the slot now
                        unsafe {
                            self.retired_cas_failures
                                .fetch_add(cur.deref().cas_failures(), Ordering::Relaxed);
                            guard.defer_destroy(cur);
                        }
                    }
                    // SAFETY: just installed, protected by `guard`
                    return unsafe { installed.deref() };
                }
                Err(e) => fresh = Some(e.new),
            }
        }
    }

    /// The collector currently in the slot, active or not.
    pub fn current<'g>(&self, guard: &'g Guard) -> Option<&'g SnapCollector> {
        // SAFETY: see `read`
        unsafe { self.slot.load(Ordering::SeqCst, guard).as_ref() }
    }

    /// Snapshot-list CAS failures over every collector this registry has held.
    pub fn snapshot_cas_failures(&self) -> u64 {
        let guard = crossbeam_epoch::pin();
        self.retired_cas_failures.load(Ordering::Relaxed)
            + self.current(&guard).map_or(0, |c| c.cas_failures())
    }
}

impl Drop for CollectorRegistry {
    fn drop(&mut self) {
        // SAFETY: exclusive access
        unsafe {
            let guard = crossbeam_epoch::unprotected();
            let cur = self.slot.load(Ordering::Relaxed, guard);
            if !cur.is_null() {
                drop(cur.into_owned());
            }
        }
    }
}

impl std::fmt::Debug for CollectorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CollectorRegistry")
            .field("capacity", &self.capacity)
            .field("registered", &self.registered.load(Ordering::Relaxed))
            .finish()
    }
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<SnapCollector>();
    check::<CollectorRegistry>();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossbeam_epoch as epoch;
    use std::sync::{Arc, Barrier};

    fn addr(c: &SnapCollector) -> usize {
        c as *const _ as usize
    }

    #[test]
    fn acquire_installs_then_reuses() {
        let reg = CollectorRegistry::new(2);
        let guard = epoch::pin();
        assert!(reg.read(&guard).is_none());
        let a = reg.acquire(&guard);
        assert!(a.is_active());
        let b = reg.acquire(&guard);
        assert_eq!(addr(a), addr(b));
        assert_eq!(addr(reg.read(&guard).unwrap()), addr(a));
    }

    #[test]
    fn deactivated_collector_is_not_read() {
        let reg = CollectorRegistry::new(1);
        let guard = epoch::pin();
        let c = reg.acquire(&guard);
        assert!(reg.read(&guard).is_some());
        c.block_and_deactivate(&guard);
        assert!(reg.read(&guard).is_none());
        let d = reg.acquire(&guard);
        assert_ne!(addr(c), addr(d));
        assert!(d.is_active());
    }

    #[test]
    fn racing_acquirers_share_one_collector() {
        for _ in 0..10_000 {
            let reg = Arc::new(CollectorRegistry::new(2));
            let barrier = Arc::new(Barrier::new(2));
            let hs: Vec<_> = (0..2)
                .map(|_| {
                    let reg = Arc::clone(&reg);
                    let barrier = Arc::clone(&barrier);
                    std::thread::spawn(move || {
                        barrier.wait();
                        let guard = epoch::pin();
                        addr(reg.acquire(&guard))
                    })
                })
                .collect();
            let got: Vec<usize> = hs.into_iter().map(|h| h.join().unwrap()).collect();
            assert_eq!(got[0], got[1]);
        }
    }

    #[test]
    fn register_hands_out_dense_ids() {
        let reg = CollectorRegistry::new(3);
        let ids: Vec<usize> = (0..3).map(|_| reg.register().unwrap().index()).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(reg.register().unwrap_err(), Error::RegistryFull { capacity: 3 });
    }

    #[test]
    fn add_node_after_block_is_rejected() {
        let c = SnapCollector::new(1);
        let guard = epoch::pin();
        let n = Node::new(3);
        assert!(c.add_node(&n, false, &guard));
        c.block_and_deactivate(&guard);
        assert!(!c.add_node(&Node::new(4), false, &guard));
        assert_eq!(c.collected(&guard).len(), 1);
        assert!(c.nodes_blocked());
    }

    #[test]
    fn reports_keep_emission_order_and_respect_blocking() {
        let reg = CollectorRegistry::new(2);
        let t0 = reg.register().unwrap();
        let guard = epoch::pin();
        let c = reg.acquire(&guard);
        let nodes: Vec<Node> = (0..50).map(Node::new).collect();
        for (i, n) in nodes.iter().enumerate() {
            let r = if i % 3 == 0 { Report::delete(n) } else { Report::insert(n) };
            c.report(&t0, r, &guard);
        }
        let got = c.reports(0, &guard);
        assert_eq!(got.len(), 50);
        for (i, r) in got.iter().enumerate() {
            assert_eq!(r.key, i as Key);
        }
        c.block_and_deactivate(&guard);
        assert!(c.reports_blocked(0) && c.reports_blocked(1));
        c.report(&t0, Report::insert(&Node::new(99)), &guard);
        assert_eq!(c.reports(0, &guard).len(), 50);
    }

    #[test]
    fn reconstruct_requires_blocking() {
        let c = SnapCollector::new(1);
        let guard = epoch::pin();
        assert!(matches!(c.reconstruct(&guard), Err(Error::ContractViolation(_))));
        c.block_and_deactivate(&guard);
        assert_eq!(c.reconstruct(&guard).unwrap(), Snapshot::default());
    }

    #[test]
    fn merge_examples() {
        let c = SnapCollector::new(1);
        let guard = epoch::pin();
        let (n3, n7, n9) = (Node::new(3), Node::new(7), Node::new(9));
        c.add_node(&n3, false, &guard);
        c.add_node(&n7, false, &guard);
        c.report_as(0, Report::delete(&n7), &guard);
        c.report_as(0, Report::insert(&n9), &guard);
        c.block_and_deactivate(&guard);
        let s = c.reconstruct(&guard).unwrap();
        assert_eq!(s.keys(), &[3, 9]);
        assert_eq!(c.reconstruct(&guard).unwrap(), s);
    }

    #[test]
    fn duplicate_collects_collapse() {
        let n = Node::new(5);
        let collected = vec![Collected::from(&n); 3];
        assert_eq!(merge_evidence(&collected, &[]).keys(), &[5]);
    }

    #[test]
    fn concurrent_blockers_leave_no_late_reports() {
        for _ in 0..200 {
            let reg = Arc::new(CollectorRegistry::new(4));
            let handles: Vec<ThreadHandle> = (0..2).map(|_| reg.register().unwrap()).collect();
            let guard = epoch::pin();
            let c = reg.acquire(&guard) as *const SnapCollector as usize;
            drop(guard);
            let stop = Arc::new(AtomicBool::new(false));
            let reporters: Vec<_> = handles
                .into_iter()
                .map(|h| {
                    let reg = Arc::clone(&reg);
                    let stop = Arc::clone(&stop);
                    std::thread::spawn(move || {
                        let n = Node::new(h.index() as Key);
                        while !stop.load(Ordering::Relaxed) {
                            let guard = epoch::pin();
                            if let Some(c) = reg.current(&guard) {
                                c.report(&h, Report::insert(&n), &guard);
                            }
                        }
                    })
                })
                .collect();
            let blockers: Vec<_> = (0..2)
                .map(|_| {
                    let reg = Arc::clone(&reg);
                    std::thread::spawn(move || {
                        let guard = epoch::pin();
                        let c = reg.current(&guard).unwrap();
                        c.block_and_deactivate(&guard);
                        (0..c.threads()).map(|t| c.reports(t, &guard).len()).collect::<Vec<_>>()
                    })
                })
                .collect();
            let after: Vec<Vec<usize>> = blockers.into_iter().map(|h| h.join().unwrap()).collect();
            std::thread::yield_now();
            stop.store(true, Ordering::Relaxed);
            for r in reporters {
                r.join().unwrap();
            }
            let guard = epoch::pin();
            let cur = reg.current(&guard).unwrap();
            assert_eq!(cur as *const SnapCollector as usize, c);
            let fin: Vec<usize> = (0..cur.threads()).map(|t| cur.reports(t, &guard).len()).collect();
            assert_eq!(after[0], fin);
            assert_eq!(after[1], fin);
            assert!(!cur.is_active());
        }
    }
}
