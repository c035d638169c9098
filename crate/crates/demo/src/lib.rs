//! Browser demo: three single-threaded views onto the snapshot machinery.
//!
//! * [`merge`]: feed per-node evidence through a real snap-collector and see
//!   which keys the snapshot keeps.
//! * [`lincheck`]: paste a history and get a linearizability verdict.
//! * [`Playground`]: insert and delete keys in an external BST and watch the
//!   tree and its snapshot.
//!
//! The plain functions return JSON strings so they can be tested natively;
//! the `wasm_bindgen` exports are thin wrappers.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use snapiter::harness::history::{Event, History};
use snapiter::harness::lincheck::check_linearizable;
use snapiter::ubst::{Route, TreeShape};
use snapiter::{CollectorRegistry, ConcurrentSet, Key, Node, Report, SnapCollector, ThreadHandle, Ubst};

#[derive(Debug, Clone, Deserialize)]
pub struct Evidence {
    pub key: Key,
    #[serde(default)]
    pub collected: bool,
    #[serde(default)]
    pub insert: bool,
    #[serde(default)]
    pub delete: bool,
}

#[derive(Debug, Serialize)]
struct MergeOut {
    snapshot: Vec<Key>,
    /// Per input row: whether that node survives the merge.
    kept: Vec<bool>,
}

/// Runs a JSON array of [`Evidence`] rows, one fresh node per row, through a
/// collector and reconstructs the snapshot.
pub fn merge(input: &str) -> Result<String, String> {
    let rows: Vec<Evidence> = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let registry = CollectorRegistry::new(1);
    let me = registry.register().map_err(|e| e.to_string())?;
    let collector = SnapCollector::new(1);
    let guard = crossbeam_epoch::pin();
    let nodes: Vec<Node> = rows.iter().map(|r| Node::new(r.key)).collect();
    for (n, r) in nodes.iter().zip(&rows) {
        if r.collected {
            collector.add_node(n, false, &guard);
        }
        if r.insert {
            collector.report(&me, Report::insert(n), &guard);
        }
        if r.delete {
            collector.report(&me, Report::delete(n), &guard);
        }
    }
    collector.block_and_deactivate(&guard);
    let snapshot = collector.reconstruct(&guard).map_err(|e| e.to_string())?;
    let out = MergeOut {
        kept: rows.iter().map(|r| (r.collected || r.insert) && !r.delete).collect(),
        snapshot: snapshot.into_keys(),
    };
    Ok(serde_json::to_string(&out).unwrap())
}

/// Accepts `{"events": [...]}` (a corpus line works too) or a bare event
/// array.
pub fn lincheck(input: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let events = v.get("events").cloned().unwrap_or(v);
    let events: Vec<Event> = serde_json::from_value(events).map_err(|e| e.to_string())?;
    let h = History { events };
    let ops = h.operations().map_err(|e| e.to_string())?.len();
    let ok = check_linearizable(&h).map_err(|e| e.to_string())?;
    Ok(json!({ "linearizable": ok, "operations": ops }).to_string())
}

fn route(r: &Route) -> Value {
    match r {
        Route::Key(k) => json!(k),
        Route::Sentinel(i) => json!(format!("∞{i}")),
    }
}

fn shape_json(s: &TreeShape) -> Value {
    match s {
        TreeShape::Internal {
            key,
            flagged,
            tagged,
            left,
            right,
        } => json!({
            "key": route(key),
            "flagged": flagged,
            "tagged": tagged,
            "left": shape_json(left),
            "right": shape_json(right),
        }),
        TreeShape::Leaf {
            key,
            id,
            marked,
            flagged,
            tagged,
        } => json!({
            "key": route(key),
            "id": id,
            "marked": marked,
            "flagged": flagged,
            "tagged": tagged,
        }),
    }
}

/// A single-threaded external BST behind the snapshot framework.
#[wasm_bindgen]
pub struct Playground {
    set: ConcurrentSet<Ubst>,
    me: ThreadHandle,
}

impl Default for Playground {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl Playground {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Playground {
        let set = ConcurrentSet::new(Ubst::new(), 1);
        let me = set.register().expect("fresh registry");
        Playground { set, me }
    }

    pub fn insert(&self, key: i32) -> bool {
        self.set.insert(&self.me, key as Key)
    }

    pub fn delete(&self, key: i32) -> bool {
        self.set.delete(&self.me, key as Key)
    }

    /// JSON array of the keys a snapshot iterator returns.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self.set.iterate(&self.me).keys()).unwrap()
    }

    /// The whole tree, sentinels included, as nested JSON.
    pub fn tree(&self) -> String {
        shape_json(&self.set.adapter().shape()).to_string()
    }
}

#[wasm_bindgen(js_name = merge)]
pub fn merge_js(input: &str) -> Result<String, JsValue> {
    merge(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = lincheck)]
pub fn lincheck_js(input: &str) -> Result<String, JsValue> {
    lincheck(input).map_err(|e| JsValue::from_str(&e))
}
