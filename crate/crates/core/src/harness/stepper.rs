//! Deterministic checker for local consistency of single atomic steps.
//!
//! A *view* is what a solo sequential cursor would still visit from some
//! paused position. A step `m` is locally consistent for an operation whose
//! change set is `R` when, for every position `N` of a cursor over a quiescent
//! structure `T`, the views from `N` on `T` and on `m(T)` differ only in
//! nodes of `R`.
//!
//! Positions are cursor states, captured before every micro-step of a full
//! traversal (so a paused cursor sitting inside a subtree, or halfway through
//! a bucket, is a position too). The step is applied in place, and each
//! captured state is resumed on the mutated structure. Both backends run
//! without memory reclamation here, so nodes a step detaches stay readable.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crossbeam_epoch::{self as epoch, Guard};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hashset::{bucket_of, HashConfig, HashSet, Version};
use crate::node::{Cursor, CursorStep, Key, NodeId, SetAdapter};
use crate::ubst::{adversarial, Ubst};

/// Unmarked nodes a solo cursor would still visit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct View {
    pub ids: BTreeSet<NodeId>,
    /// Keys in visiting order.
    pub keys: Vec<Key>,
}

fn run_solo<'g, C: Cursor<'g>>(mut cursor: C, names: &mut HashMap<NodeId, Key>) -> View {
    let mut view = View::default();
    loop {
        match cursor.step() {
            CursorStep::Visit(n) => {
                names.insert(n.id(), n.key());
                view.ids.insert(n.id());
                view.keys.push(n.key());
            }
            CursorStep::Advance => {}
            CursorStep::Done => return view,
        }
    }
}

/// The view relative to the node with identity `after`, or from the start
/// when `after` is `None`. The structure must be quiescent.
pub fn compute_view<A: SetAdapter>(set: &A, after: Option<NodeId>) -> Result<View> {
    let guard = epoch::pin();
    let mut cursor = set.cursor(&guard);
    if let Some(target) = after {
        loop {
            match cursor.step() {
                CursorStep::Visit(n) if n.id() == target => break,
                CursorStep::Visit(_) | CursorStep::Advance => {}
                CursorStep::Done => {
                    return Err(Error::ContractViolation(format!(
                        "node {target} is not reachable by the cursor"
                    )))
                }
            }
        }
    }
    Ok(run_solo(cursor, &mut HashMap::new()))
}

/// Where a paused cursor sits, named by the last node it visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Start,
    After(Key),
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Position::Start => write!(f, "start"),
            Position::After(k) => write!(f, "after {k}"),
        }
    }
}

/// A cursor state whose view changed outside the change set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Index of the micro-step state in the captured traversal.
    pub state: usize,
    pub position: Position,
    /// Keys of nodes in the symmetric difference but not in the change set.
    pub offending: Vec<Key>,
    pub view_before: Vec<Key>,
    pub view_after: Vec<Key>,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "cursor state {} ({}): view {:?} became {:?}, offending keys {:?}",
            self.state, self.position, self.view_before, self.view_after, self.offending
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// The step did not apply to this structure; nothing changed.
    Inapplicable,
    Consistent,
    Violated(Violation),
}

/// Captures every cursor state on `set`, applies `step`, and compares views.
///
/// `step` returns the change set of the step's operation, or `None` when it
/// did not apply.
pub fn check_local_consistency<A: SetAdapter>(
    set: &A,
    step: impl FnOnce(&Guard) -> Option<Vec<NodeId>>,
) -> Outcome {
    let guard = epoch::pin();
    let mut names = HashMap::new();
    let mut states = Vec::new();
    let mut cursor = set.cursor(&guard);
    let mut last = Position::Start;
    loop {
        states.push((cursor.clone(), last));
        match cursor.step() {
            CursorStep::Visit(n) => last = Position::After(n.key()),
            CursorStep::Advance => {}
            CursorStep::Done => break,
        }
    }
    let before: Vec<View> = states
        .iter()
        .map(|(c, _)| run_solo(c.clone(), &mut names))
        .collect();
    let Some(change) = step(&guard) else {
        return Outcome::Inapplicable;
    };
    let change: BTreeSet<NodeId> = change.into_iter().collect();
    for (i, ((c, position), before)) in states.into_iter().zip(before).enumerate() {
        let after = run_solo(c, &mut names);
        let offending: Vec<NodeId> = before
            .ids
            .symmetric_difference(&after.ids)
            .filter(|id| !change.contains(id))
            .copied()
            .collect();
        if !offending.is_empty() {
            return Outcome::Violated(Violation {
                state: i,
                position,
                offending: offending.iter().map(|id| names[id]).collect(),
                view_before: before.keys,
                view_after: after.keys,
            });
        }
    }
    Outcome::Consistent
}

/// Tally for one kind of step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub checks: u64,
    pub consistent: u64,
    pub inapplicable: u64,
    pub violated: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub scenario: String,
    pub step: String,
    pub violation: Option<Violation>,
    /// Set when the scenario itself went wrong (e.g. the final contents were
    /// not the expected set).
    pub note: Option<String>,
}

/// Result of an exhaustive run for one backend.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LocalReport {
    pub structure: String,
    pub bound: usize,
    pub scenarios: u64,
    pub steps: BTreeMap<String, StepStats>,
    pub failures: Vec<Failure>,
    pub failure_count: u64,
}

const KEPT_FAILURES: usize = 16;

impl LocalReport {
    fn new(structure: &str, bound: usize) -> Self {
        LocalReport {
            structure: structure.into(),
            bound,
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }

    pub fn total_checks(&self) -> u64 {
        self.steps.values().map(|s| s.checks).sum()
    }

    fn fail(&mut self, f: Failure) {
        self.failure_count += 1;
        if self.failures.len() < KEPT_FAILURES {
            self.failures.push(f);
        }
    }

    /// Runs one checked step and returns whether it applied.
    fn check<A: SetAdapter>(
        &mut self,
        scenario: &dyn Fn() -> String,
        kind: &str,
        label: impl Fn() -> String,
        set: &A,
        step: impl FnOnce(&Guard) -> Option<Vec<NodeId>>,
    ) -> bool {
        let stats = self.steps.entry(kind.to_string()).or_default();
        stats.checks += 1;
        match check_local_consistency(set, step) {
            Outcome::Inapplicable => {
                stats.inapplicable += 1;
                false
            }
            Outcome::Consistent => {
                stats.consistent += 1;
                true
            }
            Outcome::Violated(v) => {
                stats.violated += 1;
                self.fail(Failure {
                    scenario: scenario(),
                    step: label(),
                    violation: Some(v),
                    note: None,
                });
                true
            }
        }
    }
}

// ---------------------------------------------------------------------------
// tree scenarios

/// A full binary tree shape; leaves carry no data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Leaf,
    Node(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Node(l, r) => l.leaves() + r.leaves(),
        }
    }

    /// Every shape with exactly `n` leaves.
    pub fn all(n: usize) -> Vec<Shape> {
        if n == 1 {
            return vec![Shape::Leaf];
        }
        let mut out = Vec::new();
        for left in 1..n {
            for l in Shape::all(left) {
                for r in Shape::all(n - left) {
                    out.push(Shape::Node(Box::new(l.clone()), Box::new(r)));
                }
            }
        }
        out
    }

    /// Insertion order that reproduces this shape over `keys` (ascending, one
    /// per leaf): the smallest key, then for each internal node in preorder
    /// the smallest key of its right subtree.
    pub fn insertion_order(&self, keys: &[Key]) -> Vec<Key> {
        fn walk(s: &Shape, keys: &[Key], out: &mut Vec<Key>) {
            if let Shape::Node(l, r) = s {
                let nl = l.leaves();
                out.push(keys[nl]);
                walk(l, &keys[..nl], out);
                walk(r, &keys[nl..], out);
            }
        }
        let mut out = vec![keys[0]];
        walk(self, keys, &mut out);
        out
    }

    /// Preorder routing keys of internal nodes whose left child is internal.
    pub fn rotatable(&self, keys: &[Key]) -> Vec<Key> {
        fn walk(s: &Shape, keys: &[Key], out: &mut Vec<Key>) {
            if let Shape::Node(l, r) = s {
                let nl = l.leaves();
                if matches!(**l, Shape::Node(..)) {
                    out.push(keys[nl]);
                }
                walk(l, &keys[..nl], out);
                walk(r, &keys[nl..], out);
            }
        }
        let mut out = Vec::new();
        walk(self, keys, &mut out);
        out
    }
}

fn leaf_keys(n: usize) -> Vec<Key> {
    (1..=n as Key).map(|i| i * 10).collect()
}

fn build_tree(shape: &Shape, keys: &[Key]) -> Ubst {
    let t = Ubst::without_reclamation();
    let guard = epoch::pin();
    for k in shape.insertion_order(keys) {
        t.ds_insert(k, &guard).expect("fresh key");
    }
    t
}

fn subsets_up_to(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize <= max {
            out.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

/// Largest number of leaves removed together in one tree scenario.
pub const MAX_CONCURRENT_REMOVALS: usize = 3;

/// Exhaustively checks every step of insert and delete on all trees with up
/// to `bound` leaves.
pub fn check_ubst(bound: usize) -> LocalReport {
    let mut report = LocalReport::new("ubst", bound);
    for n in 0..=bound {
        let shapes = if n == 0 { vec![] } else { Shape::all(n) };
        let keys = leaf_keys(n);
        if n == 0 {
            report.scenarios += 1;
            let t = Ubst::without_reclamation();
            insert_steps(&mut report, &t, &[], &|| "empty tree".into());
            continue;
        }
        for (si, shape) in shapes.iter().enumerate() {
            let name = |what: &str| format!("{n} leaves, shape {si}: {what}");
            report.scenarios += 1;
            let t = build_tree(shape, &keys);
            insert_steps(&mut report, &t, &keys, &|| name("inserts"));

            for subset in subsets_up_to(n, MAX_CONCURRENT_REMOVALS) {
                let victims: Vec<Key> = subset.iter().map(|&i| keys[i]).collect();
                let orders = if victims.len() > 1 {
                    vec![victims.clone(), victims.iter().rev().copied().collect()]
                } else {
                    vec![victims]
                };
                for order in orders {
                    report.scenarios += 1;
                    let t = build_tree(shape, &keys);
                    let label = format!("remove {order:?}");
                    removal_script(&mut report, &t, &keys, &order, &|| name(&label));
                }
            }
        }
    }
    report
}

/// Inserts every gap key into a copy-free sequence on the same tree: each
/// insert lands in the tree produced by the previous ones.
fn insert_steps(report: &mut LocalReport, t: &Ubst, keys: &[Key], scenario: &dyn Fn() -> String) {
    let mut gaps: Vec<Key> = keys.iter().map(|k| k - 5).collect();
    gaps.push(keys.last().map_or(5, |k| k + 5));
    for k in gaps {
        report.check(scenario, "ubst.insert", || format!("insert {k}"), t, |g| {
            t.ds_insert(k, g).map(|n| vec![n.id()])
        });
    }
    let mut expect: Vec<Key> = keys.to_vec();
    expect.extend(keys.iter().map(|k| k - 5));
    expect.push(keys.last().map_or(5, |k| k + 5));
    expect.sort_unstable();
    finish(report, t.keys(), expect, t.audit().err(), scenario);
}

fn finish(
    report: &mut LocalReport,
    got: Vec<Key>,
    expect: Vec<Key>,
    audit: Option<String>,
    scenario: &dyn Fn() -> String,
) {
    if let Some(e) = audit {
        report.fail(Failure {
            scenario: scenario(),
            step: "final audit".into(),
            violation: None,
            note: Some(e),
        });
    } else if got != expect {
        report.fail(Failure {
            scenario: scenario(),
            step: "final contents".into(),
            violation: None,
            note: Some(format!("expected {expect:?}, found {got:?}")),
        });
    }
}

/// Marks every victim, then flags and tags each in turn so that removals pile
/// up on tagged paths, then lets cleanups (and re-flags for leaves whose edge
/// was tagged by a neighbour) run until everything is gone.
fn removal_script(
    report: &mut LocalReport,
    t: &Ubst,
    keys: &[Key],
    victims: &[Key],
    scenario: &dyn Fn() -> String,
) {
    let mut ids = HashMap::new();
    for &k in victims {
        report.check(scenario, "ubst.mark", || format!("mark {k}"), t, |g| {
            let n = t.seek(k, g)?;
            ids.insert(k, n.id());
            n.mark().then(|| vec![n.id()])
        });
    }
    for &k in victims {
        if report.check(scenario, "ubst.flag", || format!("flag {k}"), t, |g| {
            t.flag_step(k, g).then(Vec::new)
        }) {
            report.check(scenario, "ubst.tag", || format!("tag {k}"), t, |g| {
                t.tag_step(k, g).then(Vec::new)
            });
        }
    }
    let guard = epoch::pin();
    for _round in 0..4 * victims.len() + 4 {
        let mut progress = false;
        for &k in victims {
            if t.seek(k, &guard).is_none() {
                continue;
            }
            progress |= report.check(scenario, "ubst.flag", || format!("flag {k}"), t, |g| {
                t.flag_step(k, g).then(Vec::new)
            });
            progress |= report.check(scenario, "ubst.tag", || format!("tag {k}"), t, |g| {
                t.tag_step(k, g).then(Vec::new)
            });
            progress |= report.check(scenario, "ubst.cleanup", || format!("cleanup {k}"), t, |g| {
                t.swing_step(k, g).then(Vec::new)
            });
        }
        if !progress {
            break;
        }
    }
    let expect: Vec<Key> = keys.iter().copied().filter(|k| !victims.contains(k)).collect();
    let audit = t.audit();
    let audit_err = match audit {
        Err(e) => Some(e),
        Ok(a) if a.keys != expect || a.flagged_edges + a.tagged_edges != 0 => {
            Some(format!("removals did not complete: {a:?}"))
        }
        Ok(_) => None,
    };
    finish(report, t.keys(), expect, audit_err, scenario);
}

/// Result of running the in-place rotation on every tree within the bound.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AdversarialReport {
    pub scenarios: u64,
    pub rejected: u64,
    pub accepted: u64,
    /// The first counterexample found on a tree whose rotation is at the top
    /// routing node.
    pub root_counterexample: Option<Failure>,
}

impl AdversarialReport {
    /// True when every rotation was caught.
    pub fn all_rejected(&self) -> bool {
        self.scenarios > 0 && self.accepted == 0
    }
}

/// Applies the in-place right rotation at every eligible routing node of every
/// tree with up to `bound` leaves. A sound checker rejects each one.
pub fn check_rotation(bound: usize) -> AdversarialReport {
    let mut out = AdversarialReport::default();
    for n in 3..=bound {
        let keys = leaf_keys(n);
        for (si, shape) in Shape::all(n).iter().enumerate() {
            for (ri, route) in shape.rotatable(&keys).into_iter().enumerate() {
                out.scenarios += 1;
                let t = build_tree(shape, &keys);
                match check_local_consistency(&t, |g| {
                    adversarial::rotate_right_in_place(&t, route, g).then(Vec::new)
                }) {
                    Outcome::Violated(v) => {
                        out.rejected += 1;
                        if ri == 0 && out.root_counterexample.is_none() {
                            out.root_counterexample = Some(Failure {
                                scenario: format!("{n} leaves, shape {si}"),
                                step: format!("rotate right at {route}"),
                                violation: Some(v),
                                note: None,
                            });
                        }
                    }
                    _ => out.accepted += 1,
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// hash set scenarios

/// Largest head array used by the hash scenarios.
pub const MAX_BUCKETS: usize = 8;
/// Largest key universe used by the hash scenarios.
pub const MAX_KEYS: usize = 12;

fn build_hash(buckets: usize, keys: &[Key]) -> HashSet {
    let s = HashSet::with_config(HashConfig {
        initial_buckets: buckets,
        grow_threshold: usize::MAX,
        reclaim: false,
        freeze_journal: true,
    })
    .expect("valid config");
    let guard = epoch::pin();
    for &k in keys {
        s.ds_insert(k, &guard).expect("fresh key");
    }
    s.init_all_buckets(&guard);
    s
}

/// Exhaustively checks every step kind of the hash set on every key subset
/// of a universe of `min(bound + 4, 12)` keys, for head arrays of 1 to 8 buckets,
/// through a full grow or shrink with updates interleaved while migration is
/// pending.
pub fn check_hash(bound: usize) -> LocalReport {
    let mut report = LocalReport::new("hashset", bound);
    let universe: Vec<Key> = (0..(bound + 4).min(MAX_KEYS) as Key).collect();
    let mut buckets = 1;
    while buckets <= MAX_BUCKETS {
        for mask in 0u32..(1 << universe.len()) {
            let present: Vec<Key> = universe
                .iter()
                .copied()
                .filter(|k| mask & (1 << k) != 0)
                .collect();
            for grow in [true, false] {
                if (grow && buckets * 2 > MAX_BUCKETS) || (!grow && buckets == 1) {
                    continue;
                }
                report.scenarios += 1;
                hash_script(&mut report, buckets, &universe, &present, grow);
            }
        }
        buckets *= 2;
    }
    report
}

fn hash_script(report: &mut LocalReport, buckets: usize, universe: &[Key], present: &[Key], grow: bool) {
    let s = build_hash(buckets, present);
    let scenario = || {
        format!(
            "{buckets} buckets holding {present:?}, {}",
            if grow { "grow" } else { "shrink" }
        )
    };
    let mut model: BTreeSet<Key> = present.iter().copied().collect();

    // stable array: flip every key
    for &k in universe {
        toggle(report, &s, &scenario, &mut model, k, Version::Head);
    }

    report.check(&scenario, "hash.swing_head", || "swing head".into(), &s, |g| {
        s.swing_head_step(grow, g).then(Vec::new)
    });
    let new_size = if grow { buckets * 2 } else { buckets / 2 };
    let (first, rest) = (0..new_size).partition::<Vec<usize>, _>(|i| *i < new_size.div_ceil(2));
    for &i in &first {
        migrate_bucket(report, &s, &scenario, i, new_size, grow, buckets);
    }
    // updates while migration is pending: a stale updater hitting the old
    // array, then a current one hitting the new array
    for &k in universe {
        if !toggle(report, &s, &scenario, &mut model, k, Version::Pred) {
            toggle(report, &s, &scenario, &mut model, k, Version::Head);
        }
    }
    for &i in &rest {
        migrate_bucket(report, &s, &scenario, i, new_size, grow, buckets);
    }
    // deletes marked but not yet unlinked get unlinked from the new array
    for &k in universe {
        report.check(&scenario, "hash.delete_cas", || format!("unlink {k}"), &s, |g| {
            s.delete_cas_step(k, Version::Head, g).map(|_| Vec::new())
        });
    }
    report.check(&scenario, "hash.clear_pred", || "clear pred".into(), &s, |g| {
        s.clear_pred_step(g).then(Vec::new)
    });

    let audit_err = match s.audit() {
        Err(e) => Some(e),
        Ok(a) if a.marked_nodes != 0 || a.has_pred => Some(format!("migration left residue: {a:?}")),
        Ok(_) => s.verify_freeze_journal().err(),
    };
    finish(report, sorted(s.keys()), model.into_iter().collect(), audit_err, &scenario);
}

fn sorted(mut v: Vec<Key>) -> Vec<Key> {
    v.sort_unstable();
    v
}

/// Deletes `k` if present (mark, then unlink), inserts it otherwise, through
/// the given array. Returns whether the update took effect.
fn toggle(
    report: &mut LocalReport,
    s: &HashSet,
    scenario: &dyn Fn() -> String,
    model: &mut BTreeSet<Key>,
    k: Key,
    version: Version,
) -> bool {
    let tag = match version {
        Version::Head => "",
        Version::Pred => " (old array)",
    };
    if model.contains(&k) {
        // the unlink must be applicable before the mark is, or the delete
        // would stall here; check that first without mutating
        if !unlink_possible(s, k, version) {
            return false;
        }
        report.check(scenario, "hash.mark", || format!("mark {k}"), s, |g| {
            let n = s.seek(k, g)?;
            n.mark().then(|| vec![n.id()])
        });
        model.remove(&k);
        report.check(scenario, "hash.delete_cas", || format!("unlink {k}{tag}"), s, |g| {
            s.delete_cas_step(k, version, g).map(|_| Vec::new())
        });
        true
    } else {
        let applied = report.check(scenario, "hash.insert_cas", || format!("insert {k}{tag}"), s, |g| {
            s.insert_cas_step(k, version, g).map(|id| vec![id])
        });
        if applied {
            model.insert(k);
        }
        applied
    }
}

fn unlink_possible(s: &HashSet, k: Key, version: Version) -> bool {
    let layout = match version {
        Version::Head => s.layout(),
        Version::Pred => match s.pred_layout() {
            Some(l) => l,
            None => return false,
        },
    };
    let i = bucket_of(k, layout.len());
    matches!(&layout[i], Some((false, keys)) if keys.contains(&k))
}

fn migrate_bucket(
    report: &mut LocalReport,
    s: &HashSet,
    scenario: &dyn Fn() -> String,
    i: usize,
    new_size: usize,
    grow: bool,
    old_size: usize,
) {
    let sources = if grow {
        vec![i % old_size]
    } else {
        vec![i, i + new_size]
    };
    for j in sources {
        report.check(scenario, "hash.freeze", || format!("freeze old bucket {j}"), s, |g| {
            s.freeze_step(j, g).then(Vec::new)
        });
    }
    report.check(scenario, "hash.init_bucket", || format!("init bucket {i}"), s, |g| {
        s.init_bucket_step(i, g).then(Vec::new)
    });
}

/// Runs both backends and the adversarial rotation.
pub fn check_all(bound: usize) -> (LocalReport, LocalReport, AdversarialReport) {
    (check_ubst(bound), check_hash(bound), check_rotation(bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_counts_are_catalan() {
        let counts: Vec<usize> = (1..=6).map(|n| Shape::all(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 14, 42]);
    }

    #[test]
    fn insertion_order_rebuilds_shape() {
        let keys = leaf_keys(5);
        for shape in Shape::all(5) {
            let t = build_tree(&shape, &keys);
            assert_eq!(t.keys(), keys);
            assert_eq!(t.audit().unwrap().internal_nodes, 4);
            assert_eq!(shape_of(&t), shape);
        }
    }

    fn shape_of(t: &Ubst) -> Shape {
        use crate::ubst::{Route, TreeShape};
        fn conv(s: &TreeShape) -> Shape {
            match s {
                TreeShape::Leaf { .. } => Shape::Leaf,
                TreeShape::Internal { left, right, .. } => {
                    Shape::Node(Box::new(conv(left)), Box::new(conv(right)))
                }
            }
        }
        // R -> S -> internal(∞0) -> real tree
        let TreeShape::Internal { left: s, .. } = t.shape() else { unreachable!() };
        let TreeShape::Internal { left: top, .. } = *s else { unreachable!() };
        let TreeShape::Internal { key, left, .. } = *top else { unreachable!() };
        assert_eq!(key, Route::Sentinel(0));
        conv(&left)
    }

    #[test]
    fn views_from_positions() {
        let t = Ubst::without_reclamation();
        let guard = epoch::pin();
        for k in [2, 7, 9] {
            t.ds_insert(k, &guard);
        }
        assert_eq!(compute_view(&t, None).unwrap().keys, vec![2, 7, 9]);
        let seven = t.seek(7, &guard).unwrap().id();
        assert_eq!(compute_view(&t, Some(seven)).unwrap().keys, vec![9]);
        for k in [2, 7, 9] {
            t.seek(k, &guard).unwrap().mark();
        }
        assert!(compute_view(&t, None).unwrap().keys.is_empty());
        assert!(compute_view(&t, Some(seven)).is_err());
    }

    #[test]
    fn insert_into_four_leaf_tree_is_consistent() {
        let t = build_tree(&Shape::all(4)[2], &leaf_keys(4));
        let out = check_local_consistency(&t, |g| t.ds_insert(25, g).map(|n| vec![n.id()]));
        assert_eq!(out, Outcome::Consistent);
    }

    #[test]
    fn insert_with_empty_change_set_is_caught() {
        let t = build_tree(&Shape::all(3)[0], &leaf_keys(3));
        let out = check_local_consistency(&t, |g| t.ds_insert(25, g).map(|_| Vec::new()));
        match out {
            Outcome::Violated(v) => {
                assert_eq!(v.position, Position::Start);
                assert_eq!(v.offending, vec![25]);
            }
            other => panic!("expected a violation, got {other:?}"),
        }
    }

    #[test]
    fn small_bounds_pass() {
        assert!(check_ubst(4).passed());
        assert!(check_hash(2).passed());
        assert!(check_rotation(4).all_rejected());
    }
}
