mod common;

use common::*;
use evmbound_core::fixtures;
use serde_json::Value;

#[test]
fn analyze_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::fill());
    let o = run(&["analyze", s(&f.code), "--function", "fill(uint256[])"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("fill(uint256[])"), "{out}");
    assert!(out.contains("all: "), "{out}");
    assert!(out.contains("memory_gas"), "{out}");

    let o = run(&[
        "analyze", s(&f.code), "--function", "fill(uint256[])", "--model", "storage", "--layout", s(&f.layout),
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &v["reports"][0];
    assert_eq!(r["scope"], "storage");
    assert_eq!(r["keys"][0], "totalSupply");
}

#[test]
fn line_scope_needs_source_map() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::fill());
    let o = run(&["analyze", s(&f.code), "--model", "line"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[
        "analyze", s(&f.code), "--model", "line", "--srcmap", s(&f.srcmap), "--source", s(&f.source),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::fill());
    let bad = dir.path().join("bad.hex");
    std::fs::write(&bad, "0xzz").unwrap();
    assert_eq!(run(&["analyze", s(&bad)]).status.code(), Some(1));
    assert_eq!(run(&["analyze", s(&dir.path().join("missing"))]).status.code(), Some(1));
    assert_eq!(run(&["analyze", s(&f.code), "--model", "selected", "--filter", "NOTANOP"]).status.code(), Some(1));
    assert_eq!(run(&["analyze", s(&f.code), "--function", "0xdeadbeef"]).status.code(), Some(1));
    let o = run(&["analyze", s(&f.code), "--optimize", "--model", "all", "--source", s(&f.source)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["optimize", s(&f.code)]).status.code(), Some(1));
}

#[test]
fn storage_optimization_coerces_gas() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::fill());
    let o = run(&[
        "analyze", s(&f.code), "--function", "fill(uint256[])", "--model", "storage-optimization", "--resource",
        "gas", "--layout", s(&f.layout),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    assert!(stdout(&o).contains("totalSupply: 2*data"), "{}", stdout(&o));
}

#[test]
fn unbounded_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::unresolvable_loop());
    let o = run(&["analyze", s(&f.code), "--function", "grow(uint256)"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("inf"));
}

#[test]
fn functions_lists_dispatcher() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::multi_function());
    let sigs = dir.path().join("sigs.txt");
    std::fs::write(&sigs, "get()\nset(uint256)\nreset()\n").unwrap();
    let o = run(&["functions", s(&f.code), "--signatures", s(&sigs)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for sig in ["get()", "set(uint256)", "reset()"] {
        assert!(out.contains(sig), "{out}");
    }

    let raw = dir.path().join("raw.hex");
    std::fs::write(&raw, "6001600201").unwrap();
    let out = stdout(&run(&["functions", s(&raw)]));
    assert!(out.contains("anonymous"), "{out}");
    let empty = dir.path().join("empty.hex");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["functions", s(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim().is_empty());
}

#[test]
fn optimize_writes_source_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::fill());
    let o = run(&[
        "optimize", s(&f.code), "--function", "fill(uint256[])", "--layout", s(&f.layout), "--sol", s(&f.source),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = std::fs::read_to_string(dir.path().join("fill_opt.sol")).unwrap();
    assert_eq!(out, fixtures::FILL_OPT_SOURCE);
    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fill_opt.json")).unwrap()).unwrap();
    assert_eq!(side["functions"][0]["function"], "fill(uint256[])");
}

#[test]
fn exec_runs_code() {
    let o = run(&["exec", "0x6001600201"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["gas_used"], 9);
    assert_eq!(v["stack"][0], "0x3");
    let o = run(&["exec", "6000545f", "--storage", r#"{"0x0": "7"}"#]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["stack"][0], "0x7", "{v}");
}

#[test]
fn dot_output() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), &fixtures::branch());
    let dot = dir.path().join("g.dot");
    let o = run(&["analyze", s(&f.code), "--dot", s(&dot)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(std::fs::read_to_string(dot).unwrap().starts_with("digraph"));
}
