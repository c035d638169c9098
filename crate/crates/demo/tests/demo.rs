use serde_json::Value;
use snapiter_demo::{lincheck, merge, Playground};

#[test]
fn merge_keeps_collected_unless_deleted() {
    let out: Value = serde_json::from_str(
        &merge(r#"[{"key":1,"collected":true},{"key":2,"insert":true,"delete":true},{"key":3,"insert":true}]"#).unwrap(),
    )
    .unwrap();
    assert_eq!(out["snapshot"], serde_json::json!([1, 3]));
    assert_eq!(out["kept"], serde_json::json!([true, false, true]));
}

#[test]
fn merge_rejects_garbage() {
    assert!(merge("not json").is_err());
}

#[test]
fn lincheck_verdicts() {
    let stale = r#"{"events":[
        {"thread":0,"op":"insert","phase":"invoke","value":5,"seq":0},
        {"thread":0,"op":"insert","phase":"respond","value":true,"seq":1},
        {"thread":1,"op":"iterate","phase":"invoke","value":null,"seq":2},
        {"thread":1,"op":"iterate","phase":"respond","value":[],"seq":3}]}"#;
    let v: Value = serde_json::from_str(&lincheck(stale).unwrap()).unwrap();
    assert_eq!(v["linearizable"], false);
    assert_eq!(v["operations"], 2);
    let overlapping = stale.replace(r#""respond","value":true,"seq":1"#, r#""respond","value":true,"seq":4"#);
    let v: Value = serde_json::from_str(&lincheck(&overlapping).unwrap()).unwrap();
    assert_eq!(v["linearizable"], true);
}

#[test]
fn playground_tracks_tree() {
    let p = Playground::new();
    assert!(p.insert(20));
    assert!(p.insert(10));
    assert!(!p.insert(10));
    assert_eq!(p.snapshot(), "[10,20]");
    let tree: Value = serde_json::from_str(&p.tree()).unwrap();
    assert_eq!(tree["key"], "∞2");
    assert!(p.delete(10));
    assert_eq!(p.snapshot(), "[20]");
}
