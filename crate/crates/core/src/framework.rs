//! Reporting set operations and the snapshot iterator, generic over any
//! [`SetAdapter`].

use crossbeam_epoch::{self as epoch, Guard};

use crate::collector::{CollectorRegistry, Report, SnapCollector, Snapshot, ThreadHandle};
use crate::error::Result;
use crate::node::{Key, Node, SetAdapter};

/// A concurrent set with linearizable `insert`, `delete`, `contains` and
/// `iterate`.
///
/// Every calling thread registers once with [`register`](Self::register) and
/// passes its [`ThreadHandle`] to each operation; the handle selects the
/// thread's report-list.
pub struct ConcurrentSet<A> {
    adapter: A,
    registry: CollectorRegistry,
    sorted_append: bool,
}

impl<A: SetAdapter> ConcurrentSet<A> {
    /// `threads` bounds the number of registered threads.
    pub fn new(adapter: A, threads: usize) -> Self {
        ConcurrentSet {
            adapter,
            registry: CollectorRegistry::new(threads),
            sorted_append: false,
        }
    }

    /// Enables the sorted-append shortcut for iterators. Ignored unless the
    /// backend traverses in key order.
    pub fn with_sorted_append(mut self, enabled: bool) -> Self {
        self.sorted_append = enabled && self.adapter.sorted_traversal();
        self
    }

    pub fn sorted_append(&self) -> bool {
        self.sorted_append
    }

    pub fn register(&self) -> Result<ThreadHandle> {
        self.registry.register()
    }

    pub fn adapter(&self) -> &A {
        &self.adapter
    }

    pub fn registry(&self) -> &CollectorRegistry {
        &self.registry
    }

    fn report_delete(&self, me: &ThreadHandle, node: &Node, guard: &Guard) {
        if let Some(c) = self.registry.read(guard) {
            c.report(me, Report::delete(node), guard);
        }
    }

    /// Reports `node` to the active collector, if any: a delete when the node
    /// is marked at the time of the check, an insert otherwise.
    pub fn try_report(&self, me: &ThreadHandle, node: &Node, guard: &Guard) {
        if let Some(c) = self.registry.read(guard) {
            let r = if node.is_marked() {
                Report::delete(node)
            } else {
                Report::insert(node)
            };
            c.report(me, r, guard);
        }
    }

    pub fn insert(&self, me: &ThreadHandle, key: Key) -> bool {
        loop {
            let guard = epoch::pin();
            match self.adapter.seek(key, &guard) {
                Some(n) if n.is_marked() => {
                    self.report_delete(me, n, &guard);
                    self.adapter.ds_delete(n, &guard);
                }
                Some(n) => {
                    self.try_report(me, n, &guard);
                    return false;
                }
                None => {
                    if let Some(n) = self.adapter.ds_insert(key, &guard) {
                        self.try_report(me, n, &guard);
                        return true;
                    }
                }
            }
        }
    }

    pub fn delete(&self, me: &ThreadHandle, key: Key) -> bool {
        loop {
            let guard = epoch::pin();
            let Some(n) = self.adapter.seek(key, &guard) else {
                return false;
            };
            let won = n.mark();
            self.report_delete(me, n, &guard);
            self.adapter.ds_delete(n, &guard);
            if won {
                return true;
            }
        }
    }

    pub fn contains(&self, me: &ThreadHandle, key: Key) -> bool {
        let guard = epoch::pin();
        match self.adapter.seek(key, &guard) {
            None => false,
            Some(n) if n.is_marked() => {
                self.report_delete(me, n, &guard);
                false
            }
            Some(n) => {
                self.try_report(me, n, &guard);
                true
            }
        }
    }

    /// Takes a linearizable snapshot of the set.
    pub fn iterate(&self, _me: &ThreadHandle) -> Snapshot {
        let guard = epoch::pin();
        let collector = self.registry.acquire(&guard);
        self.collect_into(collector, &guard);
        collector.block_and_deactivate(&guard);
        collector
            .reconstruct(&guard)
            .expect("collector is blocked after block_and_deactivate")
    }

    /// The traversal pass of `iterate`: visits nodes with the backend cursor
    /// and appends each unmarked one while `collector` stays active.
    pub fn collect_into(&self, collector: &SnapCollector, guard: &Guard) {
        for n in self.adapter.traverse(guard) {
            if !collector.is_active() {
                break;
            }
            if !n.is_marked() {
                collector.add_node(n, self.sorted_append, guard);
            }
        }
    }
}

impl<A: SetAdapter + std::fmt::Debug> std::fmt::Debug for ConcurrentSet<A> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConcurrentSet")
            .field("adapter", &self.adapter)
            .field("registry", &self.registry)
            .finish()
    }
}
