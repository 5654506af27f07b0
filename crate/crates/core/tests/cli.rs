use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_approxdiag"));
    c.env_remove("APPROXDIAG_THREADS");
    c
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).to_string_lossy().into_owned()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(root().join("tests/golden").join(name)).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin().args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn region(dir: &Path, name: &str, lo: [f64; 2], hi: [f64; 2]) -> String {
    let p = dir.join(name);
    let doc = serde_json::json!({ "boxes": [{ "lower": lo, "upper": hi }] });
    std::fs::write(&p, doc.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for cmd in ["validate", "abstract", "check-fts", "monitor", "check", "falsify", "bench"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["validate", &fixture("e1.json"), "--no-such-flag"]).status.code(), Some(64));
    assert_eq!(run(&["check", &fixture("e1.json"), "--faults", "x.json", "--mode", "refute"]).status.code(), Some(64));
    assert_eq!(run(&["bench", "--threads", "0"]).status.code(), Some(64));
}

#[test]
fn validate_reports_pass() {
    let o = run(&["validate", &fixture("e1.json"), "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("PASS"));
    let v = json(&run(&["validate", &fixture("e1.json"), "--samples", "2000", "--json"]));
    assert_eq!(v["status"], "pass");
    assert_eq!(v["schema"], "approxdiag.report/1");
    assert_eq!(v["result"]["samples"], 2000);
}

#[test]
fn missing_or_invalid_inputs_are_precondition_failures() {
    assert_eq!(run(&["validate", "/nonexistent/config.json"]).status.code(), Some(4));
    // a D1 model is not a system config
    assert_eq!(run(&["validate", &fixture("d1.json")]).status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = run(&["abstract", &fixture("e1.json"), "--eta", "0.5", "--mu", "0.5", "--epsilon", "1", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!out.exists());
}

#[test]
fn abstract_matches_golden_model_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let want = golden("e1_eta0.5.model.json");
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("m{threads}.json"));
        let o = run(&[
            "abstract",
            &fixture("e1.json"),
            "--eta",
            "0.5",
            "--mu",
            "0.5",
            "--solve-epsilon",
            "--threads",
            threads,
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(std::fs::read_to_string(&out).unwrap(), want);
    }
    let out = dir.path().join("env.json");
    let o = bin()
        .env("APPROXDIAG_THREADS", "2")
        .args(["abstract", &fixture("e1.json"), "--eta", "0.5", "--mu", "0.5", "-o", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), want);
}

#[test]
fn check_fts_matches_golden_reports() {
    let o = run(&["check-fts", &fixture("d1.json"), "--faults", "1", "--rho", "0", "--brute-force", "6", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), golden("d1_check_fts.json"));
    let o = run(&["check-fts", &fixture("nd1.json"), "--faults", "1", "--rho", "0", "--json"]);
    assert_eq!(stdout(&o), golden("nd1_check_fts.json"));
    let text = stdout(&run(&["check-fts", &fixture("d1.json"), "--faults", "1", "--rho", "0"]));
    assert!(text.starts_with("diagnosable, delta 1"));
}

#[test]
fn check_fts_accepts_region_faults_on_lattice_models() {
    let dir = tempfile::tempdir().unwrap();
    let model = root().join("tests/golden/e1_eta0.5.model.json");
    let f = region(dir.path(), "f.json", [1.5, -0.5], [2.5, 1.5]);
    let v = json(&run(&["check-fts", model.to_str().unwrap(), "--faults", &f, "--rho", "0", "--json"]));
    // states (2,0) and (2,1) have indices 9 and 10 in the golden model
    assert_eq!(v["result"]["faults"], serde_json::json!([9, 10]));
}

#[test]
fn monitor_streams_decisions() {
    let args = ["monitor", &fixture("d1.json"), "--faults", "1", "--rho", "0"];
    let o = run_stdin(&args, "[0]\n[2]\n[2]\n");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0\n1\n1\n");
    let o = run_stdin(&args, "[0]\n[4]\n[4]\n");
    assert_eq!(stdout(&o), "0\n0\n0\n");
    let o = run_stdin(&args, "[0]\n[7]\n[2]\n");
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout(&o), "0\n");
    let mut json_args = args.to_vec();
    json_args.push("--json");
    let v: Value = serde_json::from_slice(&run_stdin(&json_args, "[0]\n[2]\n").stdout).unwrap();
    assert_eq!(v["result"]["decisions"], serde_json::json!([0, 1]));
}

#[test]
fn monitor_refuses_non_diagnosable_models() {
    let o = run_stdin(&["monitor", &fixture("nd1.json"), "--faults", "1", "--rho", "0"], "[0,0]\n");
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn check_prove_refute_and_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let e1 = fixture("e1.json");
    let fp = region(dir.path(), "prove.json", [1.5, -3.0], [3.0, 3.0]);
    let fr = region(dir.path(), "refute.json", [1.05, 0.2], [3.0, 3.0]);
    let fine = ["--eta", "0.025", "--mu", "0.02", "--epsilon", "0.3"];

    let mut args = vec!["check", e1.as_str(), "--faults", fp.as_str(), "--mode", "prove", "--k", "0", "--json"];
    args.extend(fine);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["result"]["verdict"]["conclusion"]["direction"], "DIAGNOSABLE_FOR_RHO_ABOVE");
    assert_eq!(v["result"]["verdict"]["conclusion"]["bound"], 0.6);

    let mut args = vec!["check", e1.as_str(), "--faults", fr.as_str(), "--mode", "refute", "--rho", "0.05", "--json"];
    args.extend(fine);
    let v = json(&run(&args));
    assert_eq!(v["result"]["verdict"]["conclusion"]["direction"], "NOT_DIAGNOSABLE_FOR_RHO");
    assert_eq!(v["result"]["verdict"]["k_prime"], 27);
    assert_eq!(v["result"]["verdict"]["templates"]["radius"], 0.3);

    // coarse defaults put lattice fault points on initial states
    let o = run(&["check", &e1, "--faults", &fp, "--mode", "prove"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("INCONCLUSIVE"));
}

#[test]
fn check_sweeps_k_and_respects_target() {
    let dir = tempfile::tempdir().unwrap();
    let e1 = fixture("e1.json");
    let fp = region(dir.path(), "prove.json", [1.5, -3.0], [3.0, 3.0]);
    let base = ["check", e1.as_str(), "--faults", fp.as_str(), "--mode", "prove", "--eta", "0.025", "--mu", "0.02", "--epsilon", "0.3", "--json"];
    let mut args = base.to_vec();
    args.extend(["--k", "0", "--k-max", "3"]);
    let v = json(&run(&args));
    assert_eq!(v["result"]["rounds"][0]["frontier"][0]["k"], 0);
    assert_eq!(v["result"]["rounds"][0]["frontier"][0]["outcome"], "diagnosable");
    let mut args = base.to_vec();
    args.extend(["--k", "0", "--rho-target", "0.5"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["result"]["rounds"][0]["frontier"][0]["outcome"], "above_target");
}

#[test]
fn check_refines_until_conclusive() {
    let dir = tempfile::tempdir().unwrap();
    let fp = region(dir.path(), "prove.json", [1.5, -3.0], [3.0, 3.0]);
    let o = run(&["check", &fixture("e1.json"), "--faults", &fp, "--mode", "prove", "--refine", "3", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let etas: Vec<f64> = v["result"]["rounds"].as_array().unwrap().iter().map(|r| r["eta"].as_f64().unwrap()).collect();
    assert_eq!(etas, vec![0.1, 0.05, 0.025]);
}

#[test]
fn check_rejects_faults_meeting_initial_set() {
    let dir = tempfile::tempdir().unwrap();
    let f = region(dir.path(), "bad.json", [0.5, 0.5], [2.0, 2.0]);
    let o = run(&["check", &fixture("e1.json"), "--faults", &f, "--mode", "prove"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn falsify_finds_pairs_along_the_hidden_direction() {
    let dir = tempfile::tempdir().unwrap();
    let fr = region(dir.path(), "refute.json", [1.05, 0.2], [3.0, 3.0]);
    let args = ["falsify", &fixture("e1.json"), "--faults", &fr, "--rho", "0.05", "--trials", "2000", "--seed", "3", "--json"];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(json(&a)["status"], "counterexample");
    let mut four = args.to_vec();
    four.extend(["--threads", "4"]);
    assert_eq!(a.stdout, run(&four).stdout);
    let o = run(&["falsify", &fixture("e1.json"), "--faults", &fr, "--rho", "0.05", "--trials", "0"]);
    assert!(stdout(&o).starts_with("no counterexample"));
}

#[test]
fn bench_reports_powers_of_three() {
    let v = json(&run(&["bench", "--dims", "1,2,3", "--json"]));
    let rows = v["result"]["rows"].as_array().unwrap();
    let states: Vec<u64> = rows.iter().map(|r| r["states"].as_u64().unwrap()).collect();
    assert_eq!(states, vec![3, 9, 27]);
}

#[test]
fn timings_go_to_stderr_only() {
    let plain = run(&["check-fts", &fixture("d1.json"), "--faults", "1", "--rho", "0"]);
    let timed = run(&["check-fts", &fixture("d1.json"), "--faults", "1", "--rho", "0", "--timings"]);
    assert_eq!(plain.stdout, timed.stdout);
    assert!(String::from_utf8_lossy(&timed.stderr).contains("[timing] check"));
    let v = json(&run(&["check-fts", &fixture("d1.json"), "--faults", "1", "--rho", "0", "--timings", "--json"]));
    assert!(v["timings_ms"]["check"].is_number());
}
