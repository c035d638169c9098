use std::process::Command;

fn snapiter() -> Command {
    Command::new(env!("CARGO_BIN_EXE_snapiter"))
}

#[test]
fn check_local_small_bound() {
    let out = snapiter().args(["check-local", "--exhaustive-bound", "3"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["adversarial_rotation"]["root_counterexample"].is_object());
}

#[test]
fn stress_global_short() {
    let out = snapiter()
        .args(["stress-global", "--structure", "ubst", "--seconds", "0.3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["violations"], 0);
}

#[test]
fn bench_writes_csv() {
    let dir = std::env::temp_dir().join(format!("snapiter-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("b.csv");
    let json = dir.join("b.json");
    let status = snapiter()
        .args(["bench", "--structure", "hashset", "--updaters", "1", "--iterators", "1"])
        .args(["--seconds", "0.2", "--warmup", "0", "--range", "12"])
        .arg("--csv")
        .arg(&csv)
        .arg("--out")
        .arg(&json)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("structure,updaters"));
    assert_eq!(text.lines().count(), 1 + 1 + 2);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(v["throughput_woi"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["bench", "--structure", "ubst", "--mix", "1-2-3"][..],
        &["bench", "--structure", "ubst", "--range", "13"],
        &["stress-global", "--structure", "ubst", "--cold", "1:100", "--hot", "50:60"],
        &["lincheck", "--corpus", "/nonexistent/corpus.jsonl"],
    ] {
        let out = snapiter().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}
