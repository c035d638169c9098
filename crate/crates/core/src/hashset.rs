//! Lock-free resizable hash set with freezable, copy-on-write buckets.
//!
//! The head [`HNode`] owns an array of bucket slots. A slot is null until the
//! bucket is initialized, then points at an immutable [`FSet`] of nodes.
//! Updates copy the bucket, edit the copy and CAS the slot. Resizing swings
//! the head to a fresh array whose buckets are filled lazily from the
//! predecessor: the old bucket(s) are frozen first (a tag bit on the slot), so
//! no update can slip into them after they have been copied.

use std::sync::atomic::AtomicU64;
use std::sync::atomic::Ordering::{Relaxed, SeqCst};
use std::sync::{Arc, Mutex};

use crossbeam_epoch::{Atomic, Guard, Owned, Pointer, Shared};

use crate::error::{Error, Result};
use crate::node::{Cursor, CursorStep, Key, Node, NodeId, SetAdapter};

const FROZEN: usize = 1;

/// Bucket index of `key` in an array of `size` buckets.
///
/// The identity on the low bits. Keys in the workloads are uniform, so a
/// mixing step buys nothing, and the identity keeps bucket contents easy to
/// predict in tests.
#[inline]
pub fn bucket_of(key: Key, size: usize) -> usize {
    (key as u64 & (size as u64 - 1)) as usize
}

/// Immutable bucket contents.
pub struct FSet {
    nodes: Box<[Arc<Node>]>,
}

impl FSet {
    fn empty() -> Self {
        FSet { nodes: Box::new([]) }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().map(|n| &**n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn find(&self, key: Key) -> Option<&Node> {
        self.nodes().find(|n| n.key() == key)
    }

    fn checksum(&self) -> u64 {
        self.nodes
            .iter()
            .fold(0xcbf2_9ce4_8422_2325, |h, n| (h ^ n.id().0).wrapping_mul(0x100_0000_01b3))
    }
}

/// One version of the bucket array.
pub struct HNode {
    buckets: Box<[Atomic<FSet>]>,
    size: usize,
    pred: Atomic<HNode>,
}

impl HNode {
    fn new(size: usize, pred: Shared<'_, HNode>) -> Self {
        HNode {
            buckets: (0..size).map(|_| Atomic::null()).collect(),
            size,
            pred: Atomic::from(pred),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

impl Drop for HNode {
    fn drop(&mut self) {
        // SAFETY: an HNode is dropped only once unreachable; it owns whatever
        // FSets its slots still point to (replaced ones were retired on CAS)
        unsafe {
            let guard = crossbeam_epoch::unprotected();
            for b in self.buckets.iter() {
                let p = b.load(Relaxed, guard).with_tag(0);
                if !p.is_null() {
                    drop(p.into_owned());
                }
            }
        }
    }
}

#[inline]
fn fset<'g>(p: Shared<'g, FSet>) -> &'g FSet {
    // SAFETY: bucket sets are read under a pinned guard and only ever freed
    // through `defer_destroy` or by dropping an unreachable HNode
    unsafe { p.with_tag(0).deref() }
}

#[inline]
fn hnode<'g>(p: Shared<'g, HNode>) -> &'g HNode {
    // SAFETY: as for `fset`
    unsafe { p.deref() }
}

/// Which bucket array a single-step update targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Version {
    Head,
    Pred,
}

/// Construction parameters.
#[derive(Debug, Clone)]
pub struct HashConfig {
    pub initial_buckets: usize,
    /// Grow when an update leaves a bucket with more nodes than this.
    pub grow_threshold: usize,
    /// When false, replaced buckets and retired arrays are leaked rather than
    /// freed. The stepper relies on this.
    pub reclaim: bool,
    /// Record every frozen bucket so its contents can be re-checked later.
    pub freeze_journal: bool,
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            initial_buckets: 2,
            grow_threshold: 8,
            reclaim: true,
            freeze_journal: false,
        }
    }
}

/// Counters from a quiescent audit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HashAudit {
    /// Keys of every node reachable from the head, ascending.
    pub keys: Vec<Key>,
    pub marked_nodes: usize,
    pub head_size: usize,
    pub initialized_buckets: usize,
    pub has_pred: bool,
}

/// The hash set. See the module docs.
pub struct HashSet {
    head: Atomic<HNode>,
    threshold: usize,
    reclaim: bool,
    journal: Option<Mutex<Vec<(usize, usize, u64)>>>,
    head_swings: AtomicU64,
}

impl Default for HashSet {
    fn default() -> Self {
        Self::new()
    }
}

impl HashSet {
    pub fn new() -> Self {
        Self::with_config(HashConfig::default()).expect("default config is valid")
    }

    pub fn with_config(cfg: HashConfig) -> Result<Self> {
        if !cfg.initial_buckets.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "initial bucket count {} is not a power of two",
                cfg.initial_buckets
            )));
        }
        if cfg.grow_threshold == 0 {
            return Err(Error::InvalidConfig("grow threshold must be positive".into()));
        }
        Ok(HashSet {
            head: Atomic::new(HNode::new(cfg.initial_buckets, Shared::null())),
            threshold: cfg.grow_threshold,
            reclaim: cfg.reclaim && !cfg.freeze_journal,
            journal: cfg.freeze_journal.then(|| Mutex::new(Vec::new())),
            head_swings: AtomicU64::new(0),
        })
    }

    /// A set that never frees replaced buckets or arrays.
    pub fn without_reclamation(initial_buckets: usize) -> Self {
        Self::with_config(HashConfig {
            initial_buckets,
            reclaim: false,
            ..HashConfig::default()
        })
        .expect("power of two bucket count")
    }

    pub fn head_size(&self) -> usize {
        let guard = crossbeam_epoch::pin();
        hnode(self.head.load(SeqCst, &guard)).size
    }

    /// Number of successful head swings so far.
    pub fn head_swings(&self) -> u64 {
        self.head_swings.load(SeqCst)
    }

    unsafe fn retire<T>(&self, p: Shared<'_, T>, guard: &Guard) {
        if self.reclaim {
            guard.defer_destroy(p.with_tag(0));
        }
    }

    /// Freezes bucket `i` of `h` (initializing it first if needed) and
    /// returns its final contents.
    fn freeze_bucket<'g>(&self, h: &'g HNode, i: usize, guard: &'g Guard) -> &'g FSet {
        let slot = &h.buckets[i];
        let mut b = self.init_bucket(h, i, guard);
        loop {
            if b.tag() & FROZEN != 0 {
                return fset(b);
            }
            match slot.compare_exchange(b, b.with_tag(FROZEN), SeqCst, SeqCst, guard) {
                Ok(_) => {
                    self.record_freeze(slot, b.with_tag(FROZEN));
                    return fset(b);
                }
                Err(e) => b = e.current,
            }
        }
    }

    fn record_freeze(&self, slot: &Atomic<FSet>, value: Shared<'_, FSet>) {
        if let Some(j) = &self.journal {
            let sum = fset(value).checksum();
            j.lock()
                .unwrap()
                .push((slot as *const _ as usize, value.into_usize(), sum));
        }
    }

    /// Checks that every frozen bucket still holds exactly what it held when
    /// it was frozen. Returns how many were checked.
    pub fn verify_freeze_journal(&self) -> Result<usize, String> {
        let Some(j) = &self.journal else {
            return Err("set was built without a freeze journal".into());
        };
        let entries = j.lock().unwrap();
        let guard = crossbeam_epoch::pin();
        for &(addr, value, sum) in entries.iter() {
            // SAFETY: journaled sets never free arrays or buckets
            let slot = unsafe { &*(addr as *const Atomic<FSet>) };
            let now = slot.load(SeqCst, &guard);
            if now.into_usize() != value {
                return Err(format!("frozen slot {addr:#x} was overwritten"));
            }
            if fset(now).checksum() != sum {
                return Err(format!("frozen bucket at slot {addr:#x} changed contents"));
            }
        }
        Ok(entries.len())
    }

    /// Contents for bucket `i` of `h` computed from its predecessor, which
    /// must already be frozen when `frozen_only` is set.
    fn migrated<'g>(&self, h: &'g HNode, i: usize, guard: &'g Guard, freeze: bool) -> Option<FSet> {
        let pred = h.pred.load(SeqCst, guard);
        if pred.is_null() {
            return Some(FSet::empty());
        }
        let p = hnode(pred);
        let sources: Vec<usize> = if h.size > p.size {
            vec![i & (p.size - 1)]
        } else {
            vec![i, i + h.size]
        };
        let mut nodes = Vec::new();
        for j in sources {
            let src = if freeze {
                self.freeze_bucket(p, j, guard)
            } else {
                let b = p.buckets[j].load(SeqCst, guard);
                if b.is_null() || b.tag() & FROZEN == 0 {
                    return None;
                }
                fset(b)
            };
            nodes.extend(
                src.nodes
                    .iter()
                    .filter(|n| bucket_of(n.key(), h.size) == i)
                    .cloned(),
            );
        }
        Some(FSet { nodes: nodes.into() })
    }

    /// Returns bucket `i` of `h`, initializing it from the predecessor if
    /// needed. The result may carry the frozen tag.
    pub fn init_bucket<'g>(&self, h: &'g HNode, i: usize, guard: &'g Guard) -> Shared<'g, FSet> {
        let slot = &h.buckets[i];
        let b = slot.load(SeqCst, guard);
        if !b.is_null() {
            return b;
        }
        let fresh = self
            .migrated(h, i, guard, true)
            .expect("freezing always yields contents");
        self.install(slot, fresh, guard)
    }

    fn install<'g>(&self, slot: &Atomic<FSet>, fresh: FSet, guard: &'g Guard) -> Shared<'g, FSet> {
        match slot.compare_exchange(Shared::null(), Owned::new(fresh), SeqCst, SeqCst, guard) {
            Ok(p) => p,
            Err(e) => e.current,
        }
    }

    /// Nodes a reader sees in bucket `i` of `h` without initializing it:
    /// either the bucket itself or the matching nodes of the predecessor.
    fn read_bucket<'g>(&self, h: &'g HNode, i: usize, guard: &'g Guard) -> Vec<&'g Node> {
        loop {
            let b = h.buckets[i].load(SeqCst, guard);
            if !b.is_null() {
                return fset(b).nodes().collect();
            }
            let pred = h.pred.load(SeqCst, guard);
            if pred.is_null() {
                // either the initial array, or pred was cleared after every
                // bucket got initialized; re-reading the slot settles which
                if h.buckets[i].load(SeqCst, guard).is_null() {
                    return Vec::new();
                }
                continue;
            }
            let p = hnode(pred);
            let sources: Vec<usize> = if h.size > p.size {
                vec![i & (p.size - 1)]
            } else {
                vec![i, i + h.size]
            };
            let mut out = Vec::new();
            for j in sources {
                let pb = p.buckets[j].load(SeqCst, guard);
                if pb.is_null() {
                    continue;
                }
                out.extend(fset(pb).nodes().filter(|n| bucket_of(n.key(), h.size) == i));
            }
            return out;
        }
    }

    fn current_head<'g>(&self, guard: &'g Guard) -> &'g HNode {
        hnode(self.head.load(SeqCst, guard))
    }

    /// Initializes every bucket of `h`, then clears and retires its
    /// predecessor.
    fn complete_migration(&self, h: &HNode, guard: &Guard) {
        for i in 0..h.size {
            self.init_bucket(h, i, guard);
        }
        let pred = h.pred.load(SeqCst, guard);
        if !pred.is_null()
            && h
                .pred
                .compare_exchange(pred, Shared::null(), SeqCst, SeqCst, guard)
                .is_ok()
        {
            // SAFETY: no array points at `pred` any more
            unsafe { self.retire(pred, guard) };
        }
    }

    /// Initializes every bucket of the head array.
    pub fn init_all_buckets(&self, guard: &Guard) {
        let h = self.current_head(guard);
        for i in 0..h.size {
            self.init_bucket(h, i, guard);
        }
    }

    /// Installs a head twice (or half) the current size. A no-op when
    /// another thread swings the head first.
    pub fn resize(&self, grow: bool, guard: &Guard) {
        let head = self.head.load(SeqCst, guard);
        let h = hnode(head);
        if !grow && h.size == 1 {
            return;
        }
        self.complete_migration(h, guard);
        let size = if grow { h.size * 2 } else { h.size / 2 };
        let fresh = Owned::new(HNode::new(size, head));
        if self
            .head
            .compare_exchange(head, fresh, SeqCst, SeqCst, guard)
            .is_ok()
        {
            self.head_swings.fetch_add(1, SeqCst);
        }
    }

    /// One insertion attempt.
    pub fn ds_insert<'g>(&self, key: Key, guard: &'g Guard) -> Option<&'g Node> {
        let h = self.current_head(guard);
        let i = bucket_of(key, h.size);
        let b = self.init_bucket(h, i, guard);
        if b.tag() & FROZEN != 0 || fset(b).find(key).is_some() {
            return None;
        }
        let (node, grew) = self.cas_insert(&h.buckets[i], b, key, guard)?;
        if grew {
            self.resize(true, guard);
        }
        Some(node)
    }

    fn cas_insert<'g>(
        &self,
        slot: &Atomic<FSet>,
        b: Shared<'g, FSet>,
        key: Key,
        guard: &'g Guard,
    ) -> Option<(&'g Node, bool)> {
        let old = fset(b);
        let node = Arc::new(Node::new(key));
        let ptr: *const Node = Arc::as_ptr(&node);
        let mut nodes = Vec::with_capacity(old.len() + 1);
        nodes.extend(old.nodes.iter().cloned());
        nodes.push(node);
        let over = nodes.len() > self.threshold;
        let fresh = Owned::new(FSet { nodes: nodes.into() });
        match slot.compare_exchange(b, fresh, SeqCst, SeqCst, guard) {
            Ok(_) => {
                // SAFETY: `b` was just replaced
                unsafe { self.retire(b, guard) };
                // SAFETY: the new bucket holds an Arc to the node and cannot
                // be freed before `guard` is dropped
                Some((unsafe { &*ptr }, over))
            }
            Err(_) => None,
        }
    }

    fn cas_remove(&self, slot: &Atomic<FSet>, b: Shared<'_, FSet>, id: NodeId, guard: &Guard) -> bool {
        let nodes: Vec<Arc<Node>> = fset(b)
            .nodes
            .iter()
            .filter(|n| n.id() != id)
            .cloned()
            .collect();
        let fresh = Owned::new(FSet { nodes: nodes.into() });
        match slot.compare_exchange(b, fresh, SeqCst, SeqCst, guard) {
            Ok(_) => {
                // SAFETY: `b` was just replaced
                unsafe { self.retire(b, guard) };
                true
            }
            Err(_) => false,
        }
    }

    /// Removes the marked node `n` from its bucket in the head array.
    pub fn ds_delete(&self, n: &Node, guard: &Guard) {
        loop {
            let h = self.current_head(guard);
            let i = bucket_of(n.key(), h.size);
            let b = self.init_bucket(h, i, guard);
            if b.tag() & FROZEN != 0 {
                continue;
            }
            if !fset(b).nodes().any(|m| m.id() == n.id()) {
                return;
            }
            if self.cas_remove(&h.buckets[i], b, n.id(), guard) {
                return;
            }
        }
    }

    // ---- single atomic steps, for the local-consistency stepper ----

    fn open_bucket<'g>(
        &self,
        key: Key,
        version: Version,
        guard: &'g Guard,
    ) -> Option<(&'g Atomic<FSet>, Shared<'g, FSet>)> {
        let mut h = self.current_head(guard);
        if version == Version::Pred {
            let pred = h.pred.load(SeqCst, guard);
            if pred.is_null() {
                return None;
            }
            h = hnode(pred);
        }
        let slot = &h.buckets[bucket_of(key, h.size)];
        let b = slot.load(SeqCst, guard);
        (!b.is_null() && b.tag() & FROZEN == 0).then_some((slot, b))
    }

    /// The bucket CAS of an insert into the head array or, for an updater
    /// that read the head before the last swing, into the predecessor.
    /// Requires the bucket to be initialized, unfrozen, and free of `key`.
    /// Never resizes.
    pub fn insert_cas_step(&self, key: Key, version: Version, guard: &Guard) -> Option<NodeId> {
        let (slot, b) = self.open_bucket(key, version, guard)?;
        if fset(b).find(key).is_some() {
            return None;
        }
        self.cas_insert(slot, b, key, guard).map(|(n, _)| n.id())
    }

    /// The bucket CAS of a delete, for a marked node holding `key`.
    pub fn delete_cas_step(&self, key: Key, version: Version, guard: &Guard) -> Option<NodeId> {
        let (slot, b) = self.open_bucket(key, version, guard)?;
        let n = fset(b).find(key).filter(|n| n.is_marked())?;
        let id = n.id();
        self.cas_remove(slot, b, id, guard).then_some(id)
    }

    /// Freezes predecessor bucket `j`, if it exists and is initialized.
    pub fn freeze_step(&self, j: usize, guard: &Guard) -> bool {
        let h = self.current_head(guard);
        let pred = h.pred.load(SeqCst, guard);
        if pred.is_null() {
            return false;
        }
        let p = hnode(pred);
        if j >= p.size {
            return false;
        }
        let b = p.buckets[j].load(SeqCst, guard);
        if b.is_null() || b.tag() & FROZEN != 0 {
            return false;
        }
        let ok = p.buckets[j]
            .compare_exchange(b, b.with_tag(FROZEN), SeqCst, SeqCst, guard)
            .is_ok();
        if ok {
            self.record_freeze(&p.buckets[j], b.with_tag(FROZEN));
        }
        ok
    }

    /// The installing CAS of `init_bucket` for head bucket `i`. Requires the
    /// source buckets to be frozen already.
    pub fn init_bucket_step(&self, i: usize, guard: &Guard) -> bool {
        let h = self.current_head(guard);
        if i >= h.size || !h.buckets[i].load(SeqCst, guard).is_null() {
            return false;
        }
        match self.migrated(h, i, guard, false) {
            Some(fresh) => {
                let now = self.install(&h.buckets[i], fresh, guard);
                !now.is_null()
            }
            None => false,
        }
    }

    /// Clears the head's predecessor once every head bucket is initialized.
    pub fn clear_pred_step(&self, guard: &Guard) -> bool {
        let h = self.current_head(guard);
        let pred = h.pred.load(SeqCst, guard);
        if pred.is_null() || h.buckets.iter().any(|b| b.load(SeqCst, guard).is_null()) {
            return false;
        }
        h.pred
            .compare_exchange(pred, Shared::null(), SeqCst, SeqCst, guard)
            .is_ok()
    }

    /// The head-swinging CAS of a resize. Requires a fully migrated head.
    pub fn swing_head_step(&self, grow: bool, guard: &Guard) -> bool {
        let head = self.head.load(SeqCst, guard);
        let h = hnode(head);
        if !h.pred.load(SeqCst, guard).is_null()
            || h.buckets.iter().any(|b| b.load(SeqCst, guard).is_null())
            || (!grow && h.size == 1)
        {
            return false;
        }
        let size = if grow { h.size * 2 } else { h.size / 2 };
        let ok = self
            .head
            .compare_exchange(head, Owned::new(HNode::new(size, head)), SeqCst, SeqCst, guard)
            .is_ok();
        if ok {
            self.head_swings.fetch_add(1, SeqCst);
        }
        ok
    }

    // ---- inspection ----

    /// Checks hash placement and key uniqueness over what a reader sees
    /// from the head.
    pub fn audit(&self) -> Result<HashAudit, String> {
        let guard = crossbeam_epoch::pin();
        let h = self.current_head(&guard);
        let mut out = HashAudit {
            head_size: h.size,
            has_pred: !h.pred.load(SeqCst, &guard).is_null(),
            ..HashAudit::default()
        };
        if !h.size.is_power_of_two() {
            return Err(format!("head size {} is not a power of two", h.size));
        }
        for i in 0..h.size {
            let b = h.buckets[i].load(SeqCst, &guard);
            if !b.is_null() {
                out.initialized_buckets += 1;
                if b.tag() & FROZEN != 0 {
                    return Err(format!("head bucket {i} is frozen"));
                }
            }
            for n in self.read_bucket(h, i, &guard) {
                if bucket_of(n.key(), h.size) != i {
                    return Err(format!("key {} sits in bucket {i} of {}", n.key(), h.size));
                }
                if n.is_marked() {
                    out.marked_nodes += 1;
                }
                out.keys.push(n.key());
            }
        }
        let len = out.keys.len();
        out.keys.sort_unstable();
        out.keys.dedup();
        if out.keys.len() != len {
            return Err("a key appears in more than one node".into());
        }
        Ok(out)
    }

    /// Keys of unmarked nodes in traversal order.
    pub fn keys(&self) -> Vec<Key> {
        let guard = crossbeam_epoch::pin();
        self.traverse(&guard).map(|n| n.key()).collect()
    }

    /// Per head bucket: `None` if uninitialized, else (frozen, keys).
    pub fn layout(&self) -> Vec<Option<(bool, Vec<Key>)>> {
        let guard = crossbeam_epoch::pin();
        Self::layout_of(self.current_head(&guard), &guard)
    }

    /// Like [`layout`](Self::layout), for the head's predecessor.
    pub fn pred_layout(&self) -> Option<Vec<Option<(bool, Vec<Key>)>>> {
        let guard = crossbeam_epoch::pin();
        let pred = self.current_head(&guard).pred.load(SeqCst, &guard);
        (!pred.is_null()).then(|| Self::layout_of(hnode(pred), &guard))
    }

    fn layout_of(h: &HNode, guard: &Guard) -> Vec<Option<(bool, Vec<Key>)>> {
        h.buckets
            .iter()
            .map(|b| {
                let b = b.load(SeqCst, guard);
                (!b.is_null()).then(|| (b.tag() & FROZEN != 0, fset(b).nodes().map(|n| n.key()).collect()))
            })
            .collect()
    }
}

/// Walks the head array bucket by bucket, reading uninitialized buckets
/// through the predecessor.
#[derive(Clone)]
pub struct HashCursor<'g> {
    set: &'g HashSet,
    guard: &'g Guard,
    head: &'g HNode,
    next_bucket: usize,
    pending: Vec<&'g Node>,
}

impl<'g> Cursor<'g> for HashCursor<'g> {
    fn step(&mut self) -> CursorStep<'g> {
        if let Some(n) = self.pending.pop() {
            return if n.is_marked() {
                CursorStep::Advance
            } else {
                CursorStep::Visit(n)
            };
        }
        if self.next_bucket == self.head.size {
            return CursorStep::Done;
        }
        let mut nodes = self.set.read_bucket(self.head, self.next_bucket, self.guard);
        nodes.reverse();
        self.pending = nodes;
        self.next_bucket += 1;
        CursorStep::Advance
    }
}

impl SetAdapter for HashSet {
    type Cursor<'g> = HashCursor<'g>;

    fn name(&self) -> &'static str {
        "hashset"
    }

    fn seek<'g>(&'g self, key: Key, guard: &'g Guard) -> Option<&'g Node> {
        let h = self.current_head(guard);
        self.read_bucket(h, bucket_of(key, h.size), guard)
            .into_iter()
            .find(|n| n.key() == key)
    }

    fn ds_insert<'g>(&'g self, key: Key, guard: &'g Guard) -> Option<&'g Node> {
        HashSet::ds_insert(self, key, guard)
    }

    fn ds_delete(&self, node: &Node, guard: &Guard) {
        HashSet::ds_delete(self, node, guard)
    }

    fn cursor<'g>(&'g self, guard: &'g Guard) -> HashCursor<'g> {
        HashCursor {
            set: self,
            guard,
            head: self.current_head(guard),
            next_bucket: 0,
            pending: Vec::new(),
        }
    }
}

impl Drop for HashSet {
    fn drop(&mut self) {
        // SAFETY: exclusive access; the head and its live predecessor are the
        // only arrays still reachable
        unsafe {
            let guard = crossbeam_epoch::unprotected();
            let head = self.head.load(Relaxed, guard);
            let pred = hnode(head).pred.load(Relaxed, guard);
            if !pred.is_null() {
                drop(pred.into_owned());
            }
            drop(head.into_owned());
        }
    }
}

impl std::fmt::Debug for HashSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HashSet")
            .field("head_size", &self.head_size())
            .field("keys", &self.keys())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossbeam_epoch as epoch;

    fn set_of(buckets: usize, keys: &[Key]) -> HashSet {
        let s = HashSet::with_config(HashConfig {
            initial_buckets: buckets,
            grow_threshold: 64,
            reclaim: false,
            freeze_journal: true,
        })
        .unwrap();
        let guard = epoch::pin();
        for &k in keys {
            assert!(s.ds_insert(k, &guard).is_some());
        }
        s
    }

    fn migrate_all(s: &HashSet, guard: &Guard) {
        let h = s.current_head(guard);
        for i in 0..h.size {
            s.init_bucket(h, i, guard);
        }
    }

    #[test]
    fn insert_lands_in_hashed_bucket() {
        let s = set_of(4, &[]);
        let guard = epoch::pin();
        s.ds_insert(5, &guard).unwrap();
        let layout = s.layout();
        assert_eq!(layout[bucket_of(5, 4)], Some((false, vec![5])));
        assert!(s.ds_insert(5, &guard).is_none());
    }

    #[test]
    fn grow_splits_bucket_lazily() {
        let keys = [1, 5, 9];
        let s = set_of(2, &keys);
        let guard = epoch::pin();
        migrate_all(&s, &guard);
        assert!(s.swing_head_step(true, &guard));
        assert_eq!(s.head_size(), 4);
        assert!(s.layout().iter().all(Option::is_none));
        // reads go through the predecessor before any bucket is initialized
        assert_eq!(s.audit().unwrap().keys, vec![1, 5, 9]);
        let h = s.current_head(&guard);
        for i in 0..4 {
            s.init_bucket(h, i, &guard);
        }
        for (i, slot) in s.layout().into_iter().enumerate() {
            let expect: Vec<Key> = keys.iter().copied().filter(|k| (*k as usize) % 4 == i).collect();
            assert_eq!(slot, Some((false, expect)), "bucket {i}");
        }
        assert_eq!(s.verify_freeze_journal().unwrap(), 2);
    }

    #[test]
    fn shrink_unions_buckets() {
        let s = set_of(4, &[0, 1, 2, 3, 6]);
        let guard = epoch::pin();
        s.resize(false, &guard);
        assert_eq!(s.head_size(), 2);
        let h = s.current_head(&guard);
        s.init_bucket(h, 0, &guard);
        s.init_bucket(h, 1, &guard);
        let layout = s.layout();
        let mut b0 = layout[0].clone().unwrap().1;
        b0.sort();
        assert_eq!(b0, vec![0, 2, 6]);
        let mut b1 = layout[1].clone().unwrap().1;
        b1.sort();
        assert_eq!(b1, vec![1, 3]);
    }

    #[test]
    fn frozen_bucket_refuses_insert() {
        let s = set_of(2, &[1]);
        let guard = epoch::pin();
        migrate_all(&s, &guard);
        let old = s.current_head(&guard);
        assert!(s.swing_head_step(true, &guard));
        assert!(s.freeze_step(1, &guard));
        // an insert that still targets the old array sees the frozen bucket
        assert!(old.buckets[1].load(SeqCst, &guard).tag() & FROZEN != 0);
        assert!(s.ds_insert(3, &guard).is_some());
        assert_eq!(s.keys(), vec![1, 3]);
    }

    #[test]
    fn init_twice_returns_same_bucket() {
        let s = set_of(2, &[]);
        let guard = epoch::pin();
        let h = s.current_head(&guard);
        let a = s.init_bucket(h, 0, &guard);
        let b = s.init_bucket(h, 0, &guard);
        assert_eq!(a, b);
    }

    #[test]
    fn delete_removes_marked_node() {
        let s = set_of(2, &[5]);
        let guard = epoch::pin();
        let n = s.seek(5, &guard).unwrap();
        n.mark();
        s.ds_delete(n, &guard);
        assert!(s.seek(5, &guard).is_none());
        s.ds_delete(n, &guard);
        assert!(s.audit().unwrap().keys.is_empty());
    }

    #[test]
    fn policy_grows_past_threshold() {
        let s = HashSet::with_config(HashConfig {
            initial_buckets: 1,
            grow_threshold: 2,
            ..HashConfig::default()
        })
        .unwrap();
        let guard = epoch::pin();
        for k in 0..64 {
            s.ds_insert(k, &guard).unwrap();
        }
        assert!(s.head_size() > 1);
        assert_eq!(s.audit().unwrap().keys, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(HashSet::with_config(HashConfig {
            initial_buckets: 3,
            ..HashConfig::default()
        })
        .is_err());
    }
}
