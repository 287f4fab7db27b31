use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use ocqa_core::format::{instance_to_json, query_to_json};
use ocqa_core::instances::fixtures;

fn ocqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocqa")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

struct Files {
    _dir: TempDir,
    root: PathBuf,
}

impl Files {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let root = dir.path().to_path_buf();
        let (db, sigma) = fixtures::primary_key_example();
        fs::write(root.join("keys.json"), instance_to_json(&db, &sigma)).unwrap();
        fs::write(root.join("keys_q.json"), query_to_json(&fixtures::primary_key_example_query())).unwrap();
        let (db, sigma) = fixtures::path_fd_example();
        fs::write(root.join("path.json"), instance_to_json(&db, &sigma)).unwrap();
        fs::write(root.join("path_q.json"), query_to_json(&fixtures::path_fd_example_query())).unwrap();
        Files { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }
}

#[test]
fn exact_on_primary_key_example() {
    let f = Files::new();
    let o = ocqa(&["exact", &f.path("keys.json"), &f.path("keys_q.json"), "--generator", "ur", "--tuple", "b1"]);
    let v = stdout_json(&o);
    assert_eq!(v["probability"], "1/4");
    assert_eq!(v["value"], 0.25);
    assert_eq!(v["generator"], "ur");
}

#[test]
fn exact_all_answers_and_consistent_input() {
    let f = Files::new();
    let o = ocqa(&["exact", &f.path("keys.json"), &f.path("keys_q.json"), "--generator", "us", "--all-answers"]);
    assert!(o.status.success());
    let lines: Vec<Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let b1 = lines.iter().find(|v| v["tuple"][0] == "b1").unwrap();
    assert_eq!(b1["probability"], "8/33");

    let consistent = r#"{"schema":{"relations":[{"name":"R","attributes":["A","B"]}]},
        "facts":[["R","a","b"]],"fds":[{"relation":"R","lhs":["A"],"rhs":["B"]}]}"#;
    let q = r#"{"answer_vars":[],"atoms":[{"relation":"R","terms":[{"var":"x"},{"const":"b"}]}]}"#;
    fs::write(f.path("c.json"), consistent).unwrap();
    fs::write(f.path("c_q.json"), q).unwrap();
    for g in ["ur", "us", "uo", "ur1", "us1", "uo1"] {
        let v = stdout_json(&ocqa(&["exact", &f.path("c.json"), &f.path("c_q.json"), "--generator", g]));
        assert_eq!(v["probability"], "1/1", "{g}");
    }
}

#[test]
fn counts() {
    let f = Files::new();
    for (what, want) in [("repairs", "12"), ("sequences", "99"), ("repairs1", "6"), ("sequences1", "36"), ("canonical", "12")] {
        let v = stdout_json(&ocqa(&["count", &f.path("keys.json"), "--what", what]));
        assert_eq!(v["count"], want, "{what}");
    }
    let v = stdout_json(&ocqa(&["count", &f.path("path.json"), "--what", "sequences"]));
    assert_eq!(v["count"], "9");
    let v = stdout_json(&ocqa(&["count", &f.path("path.json"), "--what", "repairs"]));
    assert_eq!(v["count"], "5");
}

#[test]
fn approx_within_five_percent() {
    let f = Files::new();
    let base = [
        "approx", &f.path("keys.json"), &f.path("keys_q.json"), "--generator", "ur", "--tuple", "b1",
        "--eps", "0.05", "--delta", "0.05", "--seed", "1",
    ];
    for mode in ["adaptive", "additive", "multiplicative", "multiplicative_bound"] {
        let mut args = base.to_vec();
        args.extend(["--mode", mode]);
        let v = stdout_json(&ocqa(&args));
        let x = v["value"].as_f64().unwrap();
        assert!((0.2375..=0.2625).contains(&x), "{mode}: {x}");
        assert_eq!(v["seed"], 1);
        assert!(v["estimate"]["samples_used"].as_u64().unwrap() > 0);
    }
    let again = stdout_json(&ocqa(&base));
    assert_eq!(again["value"], stdout_json(&ocqa(&base))["value"]);

    let zero = stdout_json(&ocqa(&[
        "approx", &f.path("keys.json"), &f.path("keys_q.json"), "--tuple", "b9", "--seed", "2",
    ]));
    assert_eq!(zero["value"], 0.0);
    assert_eq!(zero["estimate"]["flagged_zero"], true);
}

#[test]
fn approx_on_pos2dnf_instance() {
    let f = Files::new();
    let o = ocqa(&["gen", "pos2dnf", "--formula", "x&y", "--out", &f.path("phi.json"), "--query-out", &f.path("phi_q.json")]);
    assert!(o.status.success());
    let v = stdout_json(&ocqa(&[
        "approx", &f.path("phi.json"), &f.path("phi_q.json"), "--generator", "ur1", "--mode", "additive",
        "--eps", "0.02", "--delta", "0.01", "--seed", "4",
    ]));
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() <= 0.02);
}

#[test]
fn exit_codes() {
    let f = Files::new();
    fs::write(f.path("bad.json"), r#"{"schema": {"relations": []}, "facts": [["R", "a"]], "fds": []}"#).unwrap();
    let o = ocqa(&["count", &f.path("bad.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("facts[0]"));
    assert_eq!(ocqa(&["count", &f.path("missing.json")]).status.code(), Some(2));
    assert_eq!(ocqa(&["count"]).status.code(), Some(2));

    let o = ocqa(&["approx", &f.path("path.json"), &f.path("path_q.json"), "--generator", "ur"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("uo"));
    let o = ocqa(&["approx", &f.path("path.json"), &f.path("path_q.json"), "--generator", "uo", "--mode", "multiplicative"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("adaptive"));

    assert!(ocqa(&["gen", "fdstar", "--n", "11", "--out", &f.path("star.json"), "--query-out", &f.path("star_q.json")]).status.success());
    let o = ocqa(&["exact", &f.path("star.json"), &f.path("star_q.json"), "--generator", "uo"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn sampling_is_reproducible() {
    let f = Files::new();
    let args = ["sample", &f.path("keys.json"), "--generator", "us", "--count", "25", "--seed", "9"];
    let a = ocqa(&args);
    let b = ocqa(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<Value> = String::from_utf8(a.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 25);
    assert!(lines.iter().all(|l| l["sequence"].is_array() && l["repair"].is_array()));
    let other = ocqa(&["sample", &f.path("keys.json"), "--generator", "us", "--count", "25", "--seed", "10"]);
    assert_ne!(other.stdout, b.stdout);
}

#[test]
fn chain_dump_uniform_sequences() {
    let f = Files::new();
    let v = stdout_json(&ocqa(&["chain-dump", &f.path("path.json"), "--generator", "us"]));
    let nodes = v["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 12);
    let leaves: Vec<&Value> = nodes.iter().filter(|n| n["children"].as_array().unwrap().is_empty()).collect();
    assert_eq!(leaves.len(), 9);
    assert!(leaves.iter().all(|n| n["pi"] == "1/9"));
}

fn gen_to(dir: &Path, args: &[&str]) -> (Value, Value) {
    let inst = dir.join("g.json");
    let query = dir.join("g_q.json");
    let mut all = vec!["gen"];
    all.extend_from_slice(args);
    all.extend(["--out", inst.to_str().unwrap(), "--query-out", query.to_str().unwrap()]);
    let o = ocqa(&all);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &Path| serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
    (read(&inst), read(&query))
}

#[test]
fn generators() {
    let f = Files::new();
    let (inst, _) = gen_to(&f.root, &["fdstar", "--n", "3"]);
    assert_eq!(inst["facts"].as_array().unwrap().len(), 3);
    let v = stdout_json(&ocqa(&["exact", &f.path("g.json"), &f.path("g_q.json"), "--generator", "uo"]));
    assert_eq!(v["probability"], "2/15");

    let (inst, _) = gen_to(&f.root, &["hcoloring", "--nodes", "2", "--edges", "0-1"]);
    assert_eq!(inst["facts"].as_array().unwrap().len(), 6);
    let v = stdout_json(&ocqa(&["exact", &f.path("g.json"), &f.path("g_q.json"), "--generator", "ur"]));
    assert_eq!(v["probability"], "1/9");
    let o = ocqa(&["gen", "hcoloring", "--nodes", "2", "--edges", "0-0"]);
    assert_ne!(o.status.code(), Some(0));

    let (_, _) = gen_to(&f.root, &["pos2dnf", "--formula", "x&y|x&w"]);
    let v = stdout_json(&ocqa(&["exact", &f.path("g.json"), &f.path("g_q.json"), "--generator", "ur1"]));
    assert_eq!(v["probability"], "3/8");

    let keys = r#"{"schema":{"relations":[{"name":"R","attributes":["A","B"]}]},
        "facts":[["R","a","1"],["R","a","2"]],"fds":[{"relation":"R","lhs":["A"],"rhs":["B"]}]}"#;
    fs::write(f.path("two.json"), keys).unwrap();
    gen_to(&f.root, &["fdlift", &f.path("two.json")]);
    let v = stdout_json(&ocqa(&["exact", &f.path("g.json"), &f.path("g_q.json"), "--generator", "ur"]));
    assert_eq!(v["probability"], "1/4");

    let o = ocqa(&["gen", "fdstar", "--n", "2"]);
    let v = stdout_json(&o);
    assert!(v["instance"]["facts"].is_array() && v["query"]["atoms"].is_array());
}
