//! Nodes, the backend contract, and sequential cursors.

use std::fmt;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use crossbeam_epoch::Guard;
use serde::{Deserialize, Serialize};

/// A set element.
pub type Key = i64;

static NEXT_NODE_ID: AtomicU64 = AtomicU64::new(1);

/// Identity of a [`Node`]. Drawn from a process-wide monotonic counter, so an
/// id is never handed out twice, even after the node it named is reclaimed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl NodeId {
    fn fresh() -> Self {
        NodeId(NEXT_NODE_ID.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The unit of indirection around one key.
///
/// The mark is the logical-deletion flag: it only ever goes from unset to set.
pub struct Node {
    key: Key,
    id: NodeId,
    marked: AtomicBool,
}

impl Node {
    pub fn new(key: Key) -> Self {
        Node {
            key,
            id: NodeId::fresh(),
            marked: AtomicBool::new(false),
        }
    }

    #[inline]
    pub fn key(&self) -> Key {
        self.key
    }

    #[inline]
    pub fn id(&self) -> NodeId {
        self.id
    }

    #[inline]
    pub fn is_marked(&self) -> bool {
        self.marked.load(Ordering::SeqCst)
    }

    /// Attempts the unset→set transition of the mark. Returns `true` only for
    /// the call that performed it.
    #[inline]
    pub fn mark(&self) -> bool {
        self.marked
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Node")
            .field("key", &self.key)
            .field("id", &self.id)
            .field("marked", &self.is_marked())
            .finish()
    }
}

/// One micro-step of a sequential cursor.
#[derive(Debug, Clone, Copy)]
pub enum CursorStep<'g> {
    /// The cursor visited an unmarked node.
    Visit(&'g Node),
    /// Internal progress (descended an edge, loaded a bucket, skipped a marked
    /// node). Nothing to collect.
    Advance,
    Done,
}

/// A resumable sequential traversal.
///
/// Cursors are `Clone` so that a paused traversal can be forked: the stepper
/// in [`crate::harness::stepper`] snapshots a cursor, lets a mutation happen,
/// and then resumes both copies to compare what each would still visit.
pub trait Cursor<'g>: Clone {
    fn step(&mut self) -> CursorStep<'g>;
}

/// Adapts a [`Cursor`] into an iterator over the unmarked nodes it visits.
#[derive(Clone)]
pub struct Traversal<'g, C> {
    cursor: C,
    _nodes: PhantomData<&'g Node>,
}

impl<'g, C: Cursor<'g>> Traversal<'g, C> {
    pub fn new(cursor: C) -> Self {
        Traversal {
            cursor,
            _nodes: PhantomData,
        }
    }
}

impl<'g, C: Cursor<'g>> Iterator for Traversal<'g, C> {
    type Item = &'g Node;

    fn next(&mut self) -> Option<&'g Node> {
        loop {
            match self.cursor.step() {
                CursorStep::Visit(n) => return Some(n),
                CursorStep::Advance => continue,
                CursorStep::Done => return None,
            }
        }
    }
}

/// The operations a set backend provides to the reporting framework.
///
/// * `seek(k)` returns the node holding `k` if one is physically reachable,
///   whether or not it is marked. It never modifies the structure.
/// * `ds_insert(k)` makes one attempt to link a fresh node for `k` and returns
///   it on success. `None` means interference; the caller re-seeks.
/// * `ds_delete(n)` physically unlinks the already-marked node `n`, helping
///   any conflicting removals, and returns once `n` is unreachable.
/// * `cursor()` walks the structure in a fixed order and, run in isolation,
///   visits every unmarked node exactly once.
///
/// Nodes returned under a guard stay dereferenceable until that guard is
/// dropped.
pub trait SetAdapter: Send + Sync {
    type Cursor<'g>: Cursor<'g>
    where
        Self: 'g;

    fn name(&self) -> &'static str;

    fn seek<'g>(&'g self, key: Key, guard: &'g Guard) -> Option<&'g Node>;

    fn ds_insert<'g>(&'g self, key: Key, guard: &'g Guard) -> Option<&'g Node>;

    fn ds_delete(&self, node: &Node, guard: &Guard);

    fn cursor<'g>(&'g self, guard: &'g Guard) -> Self::Cursor<'g>;

    /// Whether the cursor visits nodes in ascending key order. Enables the
    /// sorted-append shortcut when adding nodes to a snapshot-list.
    fn sorted_traversal(&self) -> bool {
        false
    }

    fn traverse<'g>(&'g self, guard: &'g Guard) -> Traversal<'g, Self::Cursor<'g>> {
        Traversal::new(self.cursor(guard))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn first_marker_wins() {
        let n = Node::new(4);
        assert!(!n.is_marked());
        assert!(n.mark());
        assert!(n.is_marked());
        assert!(!n.mark());
        assert!(n.is_marked());
    }

    #[test]
    fn ids_are_unique() {
        let a = Node::new(1);
        let b = Node::new(1);
        assert_ne!(a.id(), b.id());
    }

    #[test]
    fn concurrent_markers_single_winner() {
        const TRIALS: usize = 100_000;
        let nodes: Arc<Vec<Node>> = Arc::new((0..TRIALS as i64).map(Node::new).collect());
        let wins: Arc<Vec<AtomicUsize>> = Arc::new((0..TRIALS).map(|_| AtomicUsize::new(0)).collect());
        let handles: Vec<_> = (0..2)
            .map(|t| {
                let nodes = Arc::clone(&nodes);
                let wins = Arc::clone(&wins);
                std::thread::spawn(move || {
                    for i in 0..TRIALS {
                        // the two threads walk in opposite directions to meet in the middle
                        let i = if t == 0 { i } else { TRIALS - 1 - i };
                        if nodes[i].mark() {
                            wins[i].fetch_add(1, Ordering::Relaxed);
                        }
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(wins.iter().all(|w| w.load(Ordering::Relaxed) == 1));
    }
}
