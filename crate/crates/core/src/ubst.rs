//! Lock-free unbalanced external binary search tree.
//!
//! Keys live only in leaves; internal nodes route searches (`key < route` goes
//! left, everything else right). Every child reference is an *edge* carrying
//! two bits next to the pointer:
//!
//! * **flag**: the leaf below is being removed together with its parent;
//! * **tag**: only the parent is being removed, the child survives.
//!
//! A flagged or tagged edge never changes again. Removal flags the
//! parent→leaf edge, tags the sibling edge, and then one CAS on the edge from
//! the nearest untagged ancestor swings it past the whole tagged path, so a
//! chain of pending removals disappears in a single step.
//!
//! The framework's logical deletion is the [`Node`] mark. `ds_delete` is
//! only called on marked nodes and uses the edge flag as the structural
//! realization of that mark.
//!
//! Detached internal nodes keep their (frozen) outgoing edges, so a cursor
//! paused inside a removed region can still finish its walk. Detached nodes
//! are handed to the epoch collector by the thread whose CAS detached them.

use std::sync::atomic::Ordering::SeqCst;
use std::sync::Mutex;

use crossbeam_epoch::{Atomic, Guard, Owned, Pointer, Shared};

use crate::node::{Cursor, CursorStep, Key, Node, SetAdapter};

const FLAG: usize = 0b01;
const TAG: usize = 0b10;

/// Routing keys extend `Key` with three sentinels above every real key.
type RouteKey = i128;
const INF0: RouteKey = i64::MAX as RouteKey + 1;
const INF1: RouteKey = INF0 + 1;
const INF2: RouteKey = INF0 + 2;

/// A routing key as seen from outside the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Route {
    Key(Key),
    /// One of the sentinels above all real keys, numbered from 0.
    Sentinel(u8),
}

impl From<RouteKey> for Route {
    fn from(k: RouteKey) -> Self {
        if k >= INF0 {
            Route::Sentinel((k - INF0) as u8)
        } else {
            Route::Key(k as Key)
        }
    }
}

enum TreeNode {
    Internal(Internal),
    Leaf(Leaf),
}

struct Internal {
    key: RouteKey,
    left: Atomic<TreeNode>,
    right: Atomic<TreeNode>,
}

struct Leaf {
    key: RouteKey,
    node: Node,
}

impl Internal {
    /// (edge toward `key`, the other edge)
    #[inline]
    fn edges(&self, key: RouteKey) -> (&Atomic<TreeNode>, &Atomic<TreeNode>) {
        if key < self.key {
            (&self.left, &self.right)
        } else {
            (&self.right, &self.left)
        }
    }
}

impl TreeNode {
    fn leaf(key: RouteKey) -> Self {
        let node = Node::new(if key >= INF0 { Key::MAX } else { key as Key });
        TreeNode::Leaf(Leaf { key, node })
    }

    fn key(&self) -> RouteKey {
        match self {
            TreeNode::Internal(i) => i.key,
            TreeNode::Leaf(l) => l.key,
        }
    }

    fn as_internal(&self) -> Option<&Internal> {
        match self {
            TreeNode::Internal(i) => Some(i),
            TreeNode::Leaf(_) => None,
        }
    }

    fn as_leaf(&self) -> Option<&Leaf> {
        match self {
            TreeNode::Leaf(l) => Some(l),
            TreeNode::Internal(_) => None,
        }
    }
}

#[inline]
fn deref<'g>(p: Shared<'g, TreeNode>) -> &'g TreeNode {
    // SAFETY: every pointer handed out here was read under a pinned guard from
    // a node that was reachable (or detached after the guard was pinned), and
    // detached nodes are only destroyed through `defer_destroy`.
    unsafe { p.deref() }
}

#[inline]
fn internal<'g>(p: Shared<'g, TreeNode>) -> &'g Internal {
    deref(p).as_internal().expect("seek record slots above the leaf are internal")
}

/// Result of [`Ubst::ds_seek`].
///
/// `leaf` is where the search for the key ended, `parent` its parent,
/// `ancestor` the parent's nearest ancestor whose edge on the path is not
/// tagged, and `successor` the ancestor's child on the path.
#[derive(Clone, Copy)]
pub struct SeekRecord<'g> {
    ancestor: Shared<'g, TreeNode>,
    successor: Shared<'g, TreeNode>,
    parent: Shared<'g, TreeNode>,
    leaf: Shared<'g, TreeNode>,
}

impl<'g> SeekRecord<'g> {
    pub fn ancestor(&self) -> Route {
        deref(self.ancestor).key().into()
    }

    pub fn successor(&self) -> Route {
        deref(self.successor).key().into()
    }

    pub fn parent(&self) -> Route {
        deref(self.parent).key().into()
    }

    pub fn leaf(&self) -> Route {
        deref(self.leaf).key().into()
    }

    pub fn leaf_node(&self) -> &'g Node {
        &deref(self.leaf).as_leaf().expect("seek ends at a leaf").node
    }
}

impl std::fmt::Debug for SeekRecord<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeekRecord")
            .field("ancestor", &self.ancestor())
            .field("successor", &self.successor())
            .field("parent", &self.parent())
            .field("leaf", &self.leaf())
            .finish()
    }
}

/// Counters from a quiescent structural audit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UbstAudit {
    /// Keys of all reachable real leaves, ascending.
    pub keys: Vec<Key>,
    pub marked_leaves: usize,
    pub internal_nodes: usize,
    pub flagged_edges: usize,
    pub tagged_edges: usize,
}

/// The tree. See the module docs.
pub struct Ubst {
    root: Atomic<TreeNode>,
    reclaim: bool,
    journal: Option<Mutex<Vec<(usize, usize)>>>,
}

impl Default for Ubst {
    fn default() -> Self {
        Self::new()
    }
}

impl Ubst {
    pub fn new() -> Self {
        Self::build(true, None)
    }

    fn build(reclaim: bool, journal: Option<Mutex<Vec<(usize, usize)>>>) -> Self {
        // R(∞2) ─┬─ S(∞1) ─┬─ leaf ∞0
        //        │         └─ leaf ∞1
        //        └─ leaf ∞2
        let s = TreeNode::Internal(Internal {
            key: INF1,
            left: Atomic::new(TreeNode::leaf(INF0)),
            right: Atomic::new(TreeNode::leaf(INF1)),
        });
        let r = TreeNode::Internal(Internal {
            key: INF2,
            left: Atomic::new(s),
            right: Atomic::new(TreeNode::leaf(INF2)),
        });
        Ubst {
            root: Atomic::new(r),
            reclaim,
            journal,
        }
    }

    /// A tree that never frees detached nodes. Used by the stepper, which
    /// resumes cursors parked on nodes that a mutation has detached.
    pub fn without_reclamation() -> Self {
        Self::build(false, None)
    }

    /// A tree that records every edge at the moment it is flagged or tagged,
    /// so [`verify_edge_journal`](Self::verify_edge_journal) can later prove
    /// those edges never changed. Disables reclamation.
    pub fn with_edge_journal() -> Self {
        Self::build(false, Some(Mutex::new(Vec::new())))
    }

    fn record_frozen(&self, edge: &Atomic<TreeNode>, value: Shared<'_, TreeNode>) {
        if let Some(j) = &self.journal {
            j.lock()
                .unwrap()
                .push((edge as *const _ as usize, value.into_usize()));
        }
    }

    /// Checks that every journaled edge still holds the value it was frozen
    /// with. Returns how many edges were checked.
    pub fn verify_edge_journal(&self) -> Result<usize, String> {
        let Some(j) = &self.journal else {
            return Err("tree was built without an edge journal".into());
        };
        let entries = j.lock().unwrap();
        let guard = crossbeam_epoch::pin();
        for &(addr, value) in entries.iter() {
            // SAFETY: journaled trees never free nodes, so the edge is live
            let edge = unsafe { &*(addr as *const Atomic<TreeNode>) };
            let now = edge.load(SeqCst, &guard).into_usize();
            if now != value {
                return Err(format!(
                    "edge {addr:#x} changed after freezing: {value:#x} -> {now:#x}"
                ));
            }
        }
        Ok(entries.len())
    }

    fn root_internal<'g>(&self, guard: &'g Guard) -> (Shared<'g, TreeNode>, &'g Internal) {
        let r = self.root.load(SeqCst, guard);
        (r, internal(r))
    }

    /// Binary search for `key`, ending at a leaf whether or not it holds
    /// `key`.
    pub fn ds_seek<'g>(&self, key: Key, guard: &'g Guard) -> SeekRecord<'g> {
        self.seek_route(key as RouteKey, guard)
    }

    fn seek_route<'g>(&self, key: RouteKey, guard: &'g Guard) -> SeekRecord<'g> {
        let (r, r_int) = self.root_internal(guard);
        let s = r_int.left.load(SeqCst, guard);
        let mut ancestor = r;
        let mut successor = s;
        let mut parent = s;
        let mut parent_field = internal(s).left.load(SeqCst, guard);
        let mut leaf = parent_field.with_tag(0);
        while let Some(node) = deref(leaf).as_internal() {
            let (current_field, _) = node.edges(key);
            let current_field = current_field.load(SeqCst, guard);
            if parent_field.tag() & TAG == 0 {
                ancestor = parent;
                successor = leaf;
            }
            parent = leaf;
            leaf = current_field.with_tag(0);
            parent_field = current_field;
        }
        SeekRecord {
            ancestor,
            successor,
            parent,
            leaf,
        }
    }

    /// One attempt at linking a new leaf for `key` next to `rec.leaf`.
    /// On failure returns the value found on the parent's edge.
    fn try_link<'g>(
        &self,
        key: Key,
        rec: &SeekRecord<'g>,
        guard: &'g Guard,
    ) -> Result<&'g Node, Shared<'g, TreeNode>> {
        let route = key as RouteKey;
        let leaf_key = deref(rec.leaf).key();
        let (edge, _) = internal(rec.parent).edges(route);
        let new_leaf = Owned::new(TreeNode::leaf(route)).into_shared(guard);
        let (left, right) = if route < leaf_key {
            (new_leaf, rec.leaf)
        } else {
            (rec.leaf, new_leaf)
        };
        let new_internal = Owned::new(TreeNode::Internal(Internal {
            key: route.max(leaf_key),
            left: Atomic::from(left),
            right: Atomic::from(right),
        }));
        match edge.compare_exchange(rec.leaf, new_internal, SeqCst, SeqCst, guard) {
            Ok(_) => Ok(&deref(new_leaf).as_leaf().unwrap().node),
            Err(e) => {
                drop(e.new);
                // SAFETY: never published
                unsafe { drop(new_leaf.into_owned()) };
                Err(e.current)
            }
        }
    }

    /// One insertion attempt. `None` if `key` is already present or the CAS
    /// lost to a conflicting update (after helping that update's cleanup).
    pub fn ds_insert<'g>(&self, key: Key, guard: &'g Guard) -> Option<&'g Node> {
        let rec = self.ds_seek(key, guard);
        if deref(rec.leaf).key() == key as RouteKey {
            return None;
        }
        match self.try_link(key, &rec, guard) {
            Ok(n) => Some(n),
            Err(current) => {
                if current.with_tag(0) == rec.leaf && current.tag() != 0 {
                    self.cleanup(key, &rec, guard);
                }
                None
            }
        }
    }

    /// Physically removes the leaf holding `node`. The node must already be
    /// marked. Returns once the leaf is unreachable.
    pub fn ds_delete(&self, node: &Node, guard: &Guard) {
        let key = node.key();
        let route = key as RouteKey;
        let holds = |rec: &SeekRecord<'_>| {
            deref(rec.leaf)
                .as_leaf()
                .is_some_and(|l| l.key == route && l.node.id() == node.id())
        };
        // injection: flag the parent→leaf edge
        loop {
            let rec = self.ds_seek(key, guard);
            if !holds(&rec) {
                return;
            }
            let (edge, _) = internal(rec.parent).edges(route);
            match edge.compare_exchange(rec.leaf, rec.leaf.with_tag(FLAG), SeqCst, SeqCst, guard) {
                Ok(_) => {
                    self.record_frozen(edge, rec.leaf.with_tag(FLAG));
                    if self.cleanup(key, &rec, guard) {
                        return;
                    }
                    break;
                }
                Err(e) if e.current.with_tag(0) == rec.leaf => {
                    if e.current.tag() & FLAG != 0 {
                        // another remover of the same node flagged it first
                        break;
                    }
                    self.cleanup(key, &rec, guard);
                }
                Err(_) => {}
            }
        }
        // cleanup: repeat until the leaf is gone
        loop {
            let rec = self.ds_seek(key, guard);
            if !holds(&rec) {
                return;
            }
            if self.cleanup(key, &rec, guard) {
                return;
            }
        }
    }

    /// The edge of `rec.parent` that survives the removal: the sibling when the
    /// edge toward `key` is flagged, otherwise the edge toward `key` itself
    /// (whose sibling must then be the flagged one).
    fn surviving_edge<'g>(&self, key: Key, rec: &SeekRecord<'g>, guard: &'g Guard) -> &'g Atomic<TreeNode> {
        let parent = internal(rec.parent);
        let (child, sibling) = parent.edges(key as RouteKey);
        if child.load(SeqCst, guard).tag() & FLAG != 0 {
            sibling
        } else {
            child
        }
    }

    /// Tags the surviving edge unless it is already frozen. Returns whether
    /// this call set the tag.
    fn tag_surviving_edge<'g>(&self, key: Key, rec: &SeekRecord<'g>, guard: &'g Guard) -> bool {
        let edge = self.surviving_edge(key, rec, guard);
        loop {
            let v = edge.load(SeqCst, guard);
            if v.tag() != 0 {
                return false;
            }
            if edge
                .compare_exchange(v, v.with_tag(TAG), SeqCst, SeqCst, guard)
                .is_ok()
            {
                self.record_frozen(edge, v.with_tag(TAG));
                return true;
            }
        }
    }

    /// The single CAS of cleanup: swing the ancestor's edge from `successor`
    /// to the surviving child of `parent`, carrying over its flag.
    fn swing<'g>(&self, key: Key, rec: &SeekRecord<'g>, guard: &'g Guard) -> bool {
        let route = key as RouteKey;
        let (successor_edge, _) = internal(rec.ancestor).edges(route);
        let keep_edge = self.surviving_edge(key, rec, guard);
        let keep = keep_edge.load(SeqCst, guard);
        let survivor = keep.with_tag(keep.tag() & FLAG);
        let ok = successor_edge
            .compare_exchange(rec.successor, survivor, SeqCst, SeqCst, guard)
            .is_ok();
        if ok && self.reclaim {
            self.retire_detached(route, rec, keep.with_tag(0), guard);
        }
        ok
    }

    /// Tries to remove `rec.leaf` (or its sibling, whichever is flagged) along
    /// with every tagged node between `rec.successor` and `rec.parent`.
    pub fn cleanup(&self, key: Key, rec: &SeekRecord<'_>, guard: &Guard) -> bool {
        self.tag_surviving_edge(key, rec, guard);
        self.swing(key, rec, guard)
    }

    /// Hands the nodes cut off by a successful swing to the epoch collector:
    /// every internal node from `successor` down to `parent`, plus the flagged
    /// leaf hanging off each of them.
    fn retire_detached<'g>(
        &self,
        route: RouteKey,
        rec: &SeekRecord<'g>,
        survivor: Shared<'g, TreeNode>,
        guard: &'g Guard,
    ) {
        let mut cur = rec.successor;
        loop {
            let node = internal(cur);
            let (toward, away) = node.edges(route);
            let toward = toward.load(SeqCst, guard).with_tag(0);
            let away = away.load(SeqCst, guard).with_tag(0);
            // SAFETY: the swing made `cur` and its removed children
            // unreachable, and only the winning swing retires them
            unsafe {
                if cur == rec.parent {
                    let removed = if toward == survivor { away } else { toward };
                    guard.defer_destroy(removed);
                    guard.defer_destroy(cur);
                    return;
                }
                guard.defer_destroy(away);
                guard.defer_destroy(cur);
            }
            cur = toward;
        }
    }

    // ---- single atomic steps, for the local-consistency stepper ----

    /// Flags the parent→leaf edge of the leaf holding `key`.
    pub fn flag_step(&self, key: Key, guard: &Guard) -> bool {
        let rec = self.ds_seek(key, guard);
        if deref(rec.leaf).key() != key as RouteKey {
            return false;
        }
        let (edge, _) = internal(rec.parent).edges(key as RouteKey);
        let ok = edge
            .compare_exchange(rec.leaf, rec.leaf.with_tag(FLAG), SeqCst, SeqCst, guard)
            .is_ok();
        if ok {
            self.record_frozen(edge, rec.leaf.with_tag(FLAG));
        }
        ok
    }

    /// The tagging step of cleanup for the removal of `key`.
    pub fn tag_step(&self, key: Key, guard: &Guard) -> bool {
        let rec = self.ds_seek(key, guard);
        if !self.removal_pending(key, &rec, guard) {
            return false;
        }
        self.tag_surviving_edge(key, &rec, guard)
    }

    /// The swing step of cleanup for the removal of `key`. Only applicable
    /// once the surviving edge is frozen, as in a real cleanup.
    pub fn swing_step(&self, key: Key, guard: &Guard) -> bool {
        let rec = self.ds_seek(key, guard);
        if !self.removal_pending(key, &rec, guard) {
            return false;
        }
        if self.surviving_edge(key, &rec, guard).load(SeqCst, guard).tag() == 0 {
            return false;
        }
        self.swing(key, &rec, guard)
    }

    fn removal_pending(&self, key: Key, rec: &SeekRecord<'_>, guard: &Guard) -> bool {
        let (child, sibling) = internal(rec.parent).edges(key as RouteKey);
        deref(rec.leaf).key() == key as RouteKey
            && (child.load(SeqCst, guard).tag() & FLAG != 0
                || sibling.load(SeqCst, guard).tag() & FLAG != 0)
    }

    // ---- inspection ----

    /// Walks the reachable tree and checks the routing invariant.
    pub fn audit(&self) -> Result<UbstAudit, String> {
        let guard = crossbeam_epoch::pin();
        let (_, r) = self.root_internal(&guard);
        if r.key != INF2 {
            return Err("root sentinel changed".into());
        }
        let right = r.right.load(SeqCst, &guard);
        if right.tag() != 0 || deref(right).key() != INF2 || deref(right).as_leaf().is_none() {
            return Err("root's right sentinel leaf changed".into());
        }
        let mut out = UbstAudit::default();
        let mut stack = vec![(r.left.load(SeqCst, &guard), RouteKey::MIN, INF2)];
        while let Some((p, lo, hi)) = stack.pop() {
            if p.tag() & FLAG != 0 {
                out.flagged_edges += 1;
            }
            if p.tag() & TAG != 0 {
                out.tagged_edges += 1;
            }
            let n = deref(p.with_tag(0));
            let k = n.key();
            if !(lo..hi).contains(&k) {
                return Err(format!("node {k} outside routing range [{lo}, {hi})"));
            }
            match n {
                TreeNode::Leaf(l) => {
                    if l.key < INF0 {
                        out.keys.push(l.key as Key);
                        if l.node.is_marked() {
                            out.marked_leaves += 1;
                        }
                    }
                }
                TreeNode::Internal(i) => {
                    if i.key < INF0 {
                        out.internal_nodes += 1;
                    }
                    stack.push((i.right.load(SeqCst, &guard), i.key, hi));
                    stack.push((i.left.load(SeqCst, &guard), lo, i.key));
                }
            }
        }
        let mut sorted = out.keys.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != out.keys.len() {
            return Err("duplicate keys in leaves".into());
        }
        out.keys = sorted;
        Ok(out)
    }

    /// Keys of reachable unmarked leaves, in traversal order.
    pub fn keys(&self) -> Vec<Key> {
        let guard = crossbeam_epoch::pin();
        self.traverse(&guard).map(|n| n.key()).collect()
    }

    /// Renders the reachable tree as nested JSON-friendly values.
    pub fn shape(&self) -> TreeShape {
        let guard = crossbeam_epoch::pin();
        let (_, r) = self.root_internal(&guard);
        fn walk(p: Shared<'_, TreeNode>, guard: &Guard) -> TreeShape {
            let flagged = p.tag() & FLAG != 0;
            let tagged = p.tag() & TAG != 0;
            match deref(p.with_tag(0)) {
                TreeNode::Leaf(l) => TreeShape::Leaf {
                    key: l.key.into(),
                    id: l.node.id().0,
                    marked: l.node.is_marked(),
                    flagged,
                    tagged,
                },
                TreeNode::Internal(i) => TreeShape::Internal {
                    key: i.key.into(),
                    flagged,
                    tagged,
                    left: Box::new(walk(i.left.load(SeqCst, guard), guard)),
                    right: Box::new(walk(i.right.load(SeqCst, guard), guard)),
                },
            }
        }
        TreeShape::Internal {
            key: r.key.into(),
            flagged: false,
            tagged: false,
            left: Box::new(walk(r.left.load(SeqCst, &guard), &guard)),
            right: Box::new(walk(r.right.load(SeqCst, &guard), &guard)),
        }
    }
}

/// Plain-data picture of the tree. Edge bits describe the edge leading into
/// the node.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeShape {
    Internal {
        key: Route,
        flagged: bool,
        tagged: bool,
        left: Box<TreeShape>,
        right: Box<TreeShape>,
    },
    Leaf {
        key: Route,
        id: u64,
        marked: bool,
        flagged: bool,
        tagged: bool,
    },
}

/// In-order traversal over reachable unmarked leaves, in key order.
#[derive(Clone)]
pub struct UbstCursor<'g> {
    guard: &'g Guard,
    stack: Vec<Shared<'g, TreeNode>>,
}

impl<'g> Cursor<'g> for UbstCursor<'g> {
    fn step(&mut self) -> CursorStep<'g> {
        let Some(top) = self.stack.pop() else {
            return CursorStep::Done;
        };
        match deref(top) {
            TreeNode::Leaf(l) => {
                if l.key >= INF0 || l.node.is_marked() {
                    CursorStep::Advance
                } else {
                    CursorStep::Visit(&l.node)
                }
            }
            TreeNode::Internal(i) => {
                self.stack.push(i.right.load(SeqCst, self.guard).with_tag(0));
                self.stack.push(i.left.load(SeqCst, self.guard).with_tag(0));
                CursorStep::Advance
            }
        }
    }
}

impl SetAdapter for Ubst {
    type Cursor<'g> = UbstCursor<'g>;

    fn name(&self) -> &'static str {
        "ubst"
    }

    fn seek<'g>(&'g self, key: Key, guard: &'g Guard) -> Option<&'g Node> {
        let rec = self.ds_seek(key, guard);
        let leaf = deref(rec.leaf).as_leaf()?;
        (leaf.key == key as RouteKey).then_some(&leaf.node)
    }

    fn ds_insert<'g>(&'g self, key: Key, guard: &'g Guard) -> Option<&'g Node> {
        Ubst::ds_insert(self, key, guard)
    }

    fn ds_delete(&self, node: &Node, guard: &Guard) {
        Ubst::ds_delete(self, node, guard)
    }

    fn cursor<'g>(&'g self, guard: &'g Guard) -> UbstCursor<'g> {
        UbstCursor {
            guard,
            stack: vec![self.root.load(SeqCst, guard)],
        }
    }

    fn sorted_traversal(&self) -> bool {
        true
    }
}

impl Drop for Ubst {
    fn drop(&mut self) {
        // SAFETY: exclusive access; frees exactly the reachable tree
        unsafe {
            let guard = crossbeam_epoch::unprotected();
            let mut stack = vec![self.root.load(SeqCst, guard)];
            while let Some(p) = stack.pop() {
                let p = p.with_tag(0);
                if let TreeNode::Internal(i) = p.deref() {
                    stack.push(i.left.load(SeqCst, guard));
                    stack.push(i.right.load(SeqCst, guard));
                }
                drop(p.into_owned());
            }
        }
    }
}

impl std::fmt::Debug for Ubst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ubst").field("keys", &self.keys()).finish()
    }
}

/// Deliberately non-local mutations, used to show the stepper rejects them.
pub mod adversarial {
    use super::*;

    /// Rotates right, in place, at the internal node routing on `route`: its
    /// left child `L` takes its place, `L`'s right subtree becomes its left
    /// subtree. Existing nodes are rewired rather than copied, so a cursor
    /// already holding the old subtree root can no longer reach `L`'s left
    /// subtree. Single-threaded use only.
    pub fn rotate_right_in_place(tree: &Ubst, route: Key, guard: &Guard) -> bool {
        let target = route as RouteKey;
        let (_, mut parent) = tree.root_internal(guard);
        loop {
            let (edge, _) = parent.edges(target);
            let p = edge.load(SeqCst, guard);
            if p.tag() != 0 {
                return false;
            }
            let Some(pi) = deref(p).as_internal() else {
                return false;
            };
            if pi.key == target {
                let l = pi.left.load(SeqCst, guard);
                if l.tag() != 0 {
                    return false;
                }
                let Some(li) = deref(l).as_internal() else {
                    return false;
                };
                let lr = li.right.load(SeqCst, guard);
                if lr.tag() != 0 {
                    return false;
                }
                pi.left.store(lr, SeqCst);
                li.right.store(p, SeqCst);
                edge.store(l, SeqCst);
                return true;
            }
            parent = pi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossbeam_epoch as epoch;

    fn tree_of(keys: &[Key]) -> Ubst {
        let t = Ubst::new();
        let guard = epoch::pin();
        for &k in keys {
            assert!(t.ds_insert(k, &guard).is_some(), "insert {k}");
        }
        t
    }

    #[test]
    fn empty_seek_ends_at_sentinel() {
        let t = Ubst::new();
        let guard = epoch::pin();
        let rec = t.ds_seek(5, &guard);
        assert_eq!(rec.leaf(), Route::Sentinel(0));
        assert_eq!(rec.parent(), Route::Sentinel(1));
        assert!(t.seek(5, &guard).is_none());
    }

    #[test]
    fn seek_finds_leaf() {
        let t = tree_of(&[5]);
        let guard = epoch::pin();
        assert_eq!(t.ds_seek(5, &guard).leaf(), Route::Key(5));
        assert_eq!(t.seek(5, &guard).unwrap().key(), 5);
    }

    #[test]
    fn seek_falls_to_nearest_leaf() {
        // checked against an independent walk over the rendered shape
        let t = tree_of(&[3, 7]);
        let guard = epoch::pin();
        let walk = reference_walk(&t.shape(), 5);
        assert_eq!(t.ds_seek(5, &guard).leaf(), walk);
    }

    fn reference_walk(shape: &TreeShape, key: Key) -> Route {
        let mut cur = shape;
        loop {
            match cur {
                TreeShape::Leaf { key: k, .. } => return *k,
                TreeShape::Internal { key: k, left, right, .. } => {
                    cur = if Route::Key(key) < *k { left } else { right };
                }
            }
        }
    }

    #[test]
    fn insert_builds_routing_node() {
        let t = tree_of(&[3]);
        let guard = epoch::pin();
        let n = t.ds_insert(5, &guard).unwrap();
        assert_eq!(n.key(), 5);
        let a = t.audit().unwrap();
        assert_eq!(a.keys, vec![3, 5]);
        assert_eq!(a.internal_nodes, 1);
        let rec = t.ds_seek(3, &guard);
        assert_eq!(rec.parent(), Route::Key(5));
    }

    #[test]
    fn duplicate_insert_is_refused() {
        let t = tree_of(&[3]);
        let guard = epoch::pin();
        assert!(t.ds_insert(3, &guard).is_none());
    }

    #[test]
    fn delete_removes_leaf_and_router() {
        let t = tree_of(&[3, 5]);
        let guard = epoch::pin();
        let n = t.seek(5, &guard).unwrap();
        assert!(n.mark());
        t.ds_delete(n, &guard);
        let a = t.audit().unwrap();
        assert_eq!(a.keys, vec![3]);
        assert_eq!(a.internal_nodes, 0);
        assert_eq!((a.flagged_edges, a.tagged_edges), (0, 0));
        // second call is a no-op
        t.ds_delete(n, &guard);
        assert_eq!(t.audit().unwrap().keys, vec![3]);
    }

    #[test]
    fn cursor_yields_in_key_order() {
        let t = tree_of(&[9, 2, 7]);
        assert_eq!(t.keys(), vec![2, 7, 9]);
        let guard = epoch::pin();
        t.seek(7, &guard).unwrap().mark();
        assert_eq!(t.keys(), vec![2, 9]);
    }

    #[test]
    fn minimal_cleanup_swings_to_sibling() {
        let t = Ubst::with_edge_journal();
        let guard = epoch::pin();
        for k in [10, 20] {
            t.ds_insert(k, &guard).unwrap();
        }
        t.seek(20, &guard).unwrap().mark();
        assert!(t.flag_step(20, &guard));
        let rec = t.ds_seek(20, &guard);
        assert_eq!(rec.parent(), Route::Key(20));
        assert!(t.tag_step(20, &guard));
        assert!(t.swing_step(20, &guard));
        let a = t.audit().unwrap();
        assert_eq!(a.keys, vec![10]);
        assert_eq!(a.internal_nodes, 0);
        assert_eq!(t.verify_edge_journal().unwrap(), 2);
    }

    #[test]
    fn deep_tagged_path_removed_by_one_swing() {
        // 10 20 30 40 inserted in order give a right spine:
        // 20 ─┬─ 10
        //     └─ 30 ─┬─ 20
        //            └─ 40 ─┬─ 30
        //                   └─ 40
        // Stall removals of leaf 10, leaf 20 and leaf 30: each flags its
        // leaf and tags the edge toward the spine, so the path 20→30→40 is
        // tagged and the last removal's swing cuts all three routers at once.
        let t = Ubst::with_edge_journal();
        let guard = epoch::pin();
        for k in [10, 20, 30, 40] {
            t.ds_insert(k, &guard).unwrap();
        }
        assert_eq!(t.audit().unwrap().internal_nodes, 3);
        for k in [10, 20, 30] {
            t.seek(k, &guard).unwrap().mark();
            assert!(t.flag_step(k, &guard), "flag {k}");
            assert!(t.tag_step(k, &guard), "tag {k}");
        }
        let rec = t.ds_seek(30, &guard);
        assert_eq!(rec.successor(), Route::Key(20));
        assert_eq!(rec.parent(), Route::Key(40));
        let before = t.audit().unwrap();
        assert_eq!(before.tagged_edges, 3);
        assert!(t.swing_step(30, &guard));
        let a = t.audit().unwrap();
        assert_eq!(a.keys, vec![40]);
        assert_eq!(a.internal_nodes, 0);
        assert_eq!((a.flagged_edges, a.tagged_edges), (0, 0));
        t.verify_edge_journal().unwrap();
    }

    #[test]
    fn stale_record_swing_fails_without_change() {
        let t = tree_of(&[10, 20]);
        let guard = epoch::pin();
        let n = t.seek(20, &guard).unwrap();
        n.mark();
        let rec = t.ds_seek(20, &guard);
        assert!(t.flag_step(20, &guard));
        assert!(t.cleanup(20, &rec, &guard));
        let before = t.audit().unwrap();
        assert!(!t.cleanup(20, &rec, &guard));
        assert_eq!(t.audit().unwrap(), before);
    }

    #[test]
    fn insert_racing_flagged_edge_helps_cleanup() {
        let t = tree_of(&[10, 20]);
        let guard = epoch::pin();
        t.seek(20, &guard).unwrap().mark();
        assert!(t.flag_step(20, &guard));
        // 25 lands next to the flagged leaf 20: the CAS fails and helps
        assert!(t.ds_insert(25, &guard).is_none());
        assert!(t.seek(20, &guard).is_none());
        assert!(t.ds_insert(25, &guard).is_some());
        assert_eq!(t.audit().unwrap().keys, vec![10, 25]);
    }

    #[test]
    fn rotation_rewires_in_place() {
        let t = tree_of(&[40, 20, 60, 10, 30]);
        let guard = epoch::pin();
        let before = t.audit().unwrap().internal_nodes;
        assert!(adversarial::rotate_right_in_place(&t, 40, &guard));
        assert_eq!(t.audit().unwrap().internal_nodes, before);
        assert_eq!(t.audit().unwrap().keys, vec![10, 20, 30, 40, 60]);
    }
}
