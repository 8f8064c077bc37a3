use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn hitlbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hitlbo")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn triangle() -> String {
    data("triangle.col").to_string_lossy().into_owned()
}

fn search(out: &Path, extra: &[&str]) -> Output {
    let (out, t) = (out.to_string_lossy().into_owned(), triangle());
    let mut args = vec!["search", "--instance", &t, "--s", "4", "--x", "8", "--out", &out];
    args.extend_from_slice(extra);
    hitlbo(&args)
}

#[test]
fn reduce_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = hitlbo(&["reduce", "--instance", &triangle(), "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let doc = json(&a);
    let d = &doc["descriptor"];
    assert_eq!(d["d1"].as_u64().unwrap() - d["d0"].as_u64().unwrap() + 1, 8);
    assert_eq!(doc["provenance"]["seed"], 7);
    assert_eq!(doc["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["provenance"]["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn missing_instance_fails() {
    let o = hitlbo(&["reduce", "--instance", "/definitely/not/here.col"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cannot read instance"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn self_loop_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loop.col");
    fs::write(&path, "p edge 1 1\ne 1 1\n").unwrap();
    let o = hitlbo(&["brute", "--instance", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("self-loop"), "{}", stderr(&o));
}

#[test]
fn brute_force_cnf() {
    let o = hitlbo(&["brute", "--instance", data("small.cnf").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["value"], 3.0);
    assert_eq!(doc["instance"]["problem"], "max-sat");
}

#[test]
fn search_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let o = search(dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record = json(&dir.path().join("run.json"));
    assert_eq!(record["result"]["best_value"], 3.0);
    assert_eq!(record["result"]["expert_queries"], 8);
    assert!(!record["result"]["expansion_trace"].as_array().unwrap().is_empty());
    assert_eq!(record["provenance"]["seed"], 0);

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "run_id,cell,lo,hi,sample,iteration,point,value");
    assert_eq!(lines.count() as u64, record["result"]["total_evaluations"].as_u64().unwrap());
}

fn strip_timestamps(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("created_at");
    v
}

#[test]
fn reruns_are_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = search(dir.path(), &["--expert", "mle", "--seed", "11"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ra = strip_timestamps(json(&a.path().join("run.json")));
    let rb = strip_timestamps(json(&b.path().join("run.json")));
    assert_eq!(ra, rb);
    assert_eq!(fs::read(a.path().join("trace.csv")).unwrap(), fs::read(b.path().join("trace.csv")).unwrap());
}

#[test]
fn remote_timeout_suspends_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let o = search(dir.path(), &["--expert", "remote", "--timeout", "1", "--bind", "127.0.0.1:0"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let out = stdout(&o);
    let token = out.lines().find_map(|l| l.strip_prefix("resume-token: ")).expect("token printed").to_string();
    assert!(Path::new(&token).exists());
    assert!(!dir.path().join("run.json").exists());

    let o = hitlbo(&["search", "--resume", &token, "--expert", "sim", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resumed = json(&dir.path().join("run.json"));

    let straight = tempfile::tempdir().unwrap();
    assert!(search(straight.path(), &["--expert", "sim"]).status.success());
    let straight = json(&straight.path().join("run.json"));
    assert_eq!(resumed["result"], straight["result"]);
}

#[test]
fn bounds_calculator() {
    let o = hitlbo(&["bounds", "--t", "256", "--n", "2^16", "--val", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((doc["regret_lower"].as_f64().unwrap() - 0.292_893_218_8).abs() < 1e-9);
    assert!((doc["cell_ub"].as_f64().unwrap() - 7.071_067_811_9).abs() < 1e-9);
    let o = hitlbo(&["bounds", "--t", "1e7", "--n", "2^100", "--exponent", "as-written"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["as_written_flag"], true);
}

#[test]
fn bo_over_full_domain() {
    let o = hitlbo(&["bo", "--instance", &triangle(), "--x", "8", "--acquisition", "prs"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["result"]["best_value"], 3.0);
    assert_eq!(doc["best_objective"], 3.0);
    assert_eq!(doc["result"]["trace"].as_array().unwrap().len(), 8);
}

#[test]
fn bench_suite_contract() {
    let o = hitlbo(&["bench", "bijection"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("[PASS] criterion 1 bijection"), "{line}");
    let cases: u64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!(cases >= 1024);

    let o = hitlbo(&["bench", "no-such-suite"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bijection") && stderr(&o).contains("cell-tree"), "{}", stderr(&o));
}
