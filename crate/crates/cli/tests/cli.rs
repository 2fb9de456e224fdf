use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn examples() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/examples")
}

fn example(name: &str) -> String {
    examples().join(name).display().to_string()
}

fn eqpalg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqpalg"))
        .args(args)
        .env("EQPALG_COLOR", "0")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn scratch(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("eqpalg-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn assert_schema(doc: &Value) {
    let schema: Value =
        serde_json::from_str(include_str!("../../core/schema/trace.schema.json")).expect("schema is JSON");
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn parse_teleport_succeeds() {
    let out = eqpalg(&["parse", &example("teleport.eqp")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = eqpalg(&["--format", "json", "parse", &example("teleport.eqp")]);
    let doc = stdout_json(&out);
    assert_eq!(doc["main"], "Teleport");
    assert_eq!(doc["definitions"].as_array().unwrap().len(), 4);
}

#[test]
fn parse_error_reports_position() {
    let path = scratch("dangling.eqp", "P := g?x .\nmain P\n");
    let out = eqpalg(&["parse", &path]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":1:") || err.contains(":2:"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_file_is_io_error() {
    let out = eqpalg(&["parse", "/definitely/not/here.eqp"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn receive_h_trace_applies_h_and_ends_in_minus() {
    let out = eqpalg(&["--format", "json", "run", &example("receive_h.eqp")]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_schema(&doc);
    assert_eq!(doc["final"], "terminated");
    let steps = doc["steps"].as_array().unwrap();
    let h = steps.iter().find(|s| s["label"] == "unit").expect("a gate step");
    assert_eq!(h["gate"], "H");
    assert_eq!(h["targets"], serde_json::json!(["x"]));

    // |−⟩⟨−| ⊗ ρ′ with ρ′ the pure state 0.6|0⟩ + 0.8i|1⟩.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let minus = [(s, 0.0), (-s, 0.0)];
    let w = [(0.6, 0.0), (0.0, 0.8)];
    let amp: Vec<(f64, f64)> = minus
        .iter()
        .flat_map(|a| w.iter().map(move |b| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)))
        .collect();
    let digest = &steps.last().unwrap()["rho_digest"];
    assert_eq!(digest["nqubits"], 2);
    let m = digest["matrix"].as_array().unwrap();
    for (i, u) in amp.iter().enumerate() {
        for (j, v) in amp.iter().enumerate() {
            let (re, im) = (u.0 * v.0 + u.1 * v.1, u.1 * v.0 - u.0 * v.1);
            let got = &m[i * 4 + j];
            assert!((got[0].as_f64().unwrap() - re).abs() < 1e-9, "entry {i},{j}");
            assert!((got[1].as_f64().unwrap() - im).abs() < 1e-9, "entry {i},{j}");
        }
    }
}

#[test]
fn nil_main_deadlocks() {
    let path = scratch("nil.eqp", "P := nil\nmain P\n");
    let out = eqpalg(&["run", &path]);
    assert_eq!(code(&out), 3);
    let out = eqpalg(&["--format", "json", "run", &path]);
    let doc = stdout_json(&out);
    assert_schema(&doc);
    assert_eq!(doc["final"], "deadlocked");
    assert_eq!(doc["steps"].as_array().unwrap().len(), 0);
}

#[test]
fn step_budget_exit_code() {
    let out = eqpalg(&["--max-steps", "1", "run", &example("receive_h.eqp")]);
    assert_eq!(code(&out), 4);
}

#[test]
fn runtime_error_prints_partial_trace() {
    let path = scratch(
        "alias.eqp",
        "P := [ x: Qubit . (d?y . CNOT[x, y] . end || d!x . end) \\ {d} ]\nmain P\n",
    );
    let out = eqpalg(&["--format", "json", "run", &path]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_schema(&doc);
    assert_eq!(doc["final"], "error");
    assert_eq!(doc["steps"].as_array().unwrap().len(), 1);
}

#[test]
fn same_seed_same_bytes() {
    let args = ["--format", "json", "--policy", "random", "--seed", "42", "run"];
    let path = example("teleport.eqp");
    let a = eqpalg(&[&args[..], &[path.as_str()]].concat());
    let b = eqpalg(&[&args[..], &[path.as_str()]].concat());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_schema(&stdout_json(&a));
}

#[test]
fn teleport_check_default_passes() {
    let out = eqpalg(&["teleport-check"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    for branch in ["00", "01", "10", "11"] {
        assert!(text.contains(branch), "{text}");
    }
}

#[test]
fn teleport_check_mutation_fails() {
    let out = eqpalg(&["teleport-check", "--trials", "10", "--mutate", "drop-x-correction"]);
    assert_eq!(code(&out), 6);
    let out = eqpalg(&["teleport-check", "--trials", "10", "--mutate", "send-qubit"]);
    assert_eq!(code(&out), 6);
}

#[test]
fn teleport_check_zero_trials_warns() {
    let out = eqpalg(&["teleport-check", "--trials", "0"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn unknown_mutation_is_usage_error() {
    let out = eqpalg(&["teleport-check", "--mutate", "drop-everything"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn graph_of_handoff() {
    let out = eqpalg(&["--format", "json", "graph", &example("handoff.eqp")]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_eq!(doc["nodes"], 2);
    assert_eq!(doc["edges"].as_array().unwrap().len(), 1);
    let out = eqpalg(&["graph", "--dot", &example("handoff.eqp")]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("digraph"));
}

#[test]
fn fmt_output_reparses_to_the_same_text() {
    let once = eqpalg(&["fmt", &example("teleport.eqp")]);
    assert_eq!(code(&once), 0);
    let path = scratch("formatted.eqp", &String::from_utf8_lossy(&once.stdout));
    let twice = eqpalg(&["fmt", &path]);
    assert_eq!(once.stdout, twice.stdout);
}

#[test]
fn human_and_json_streams_stay_apart() {
    let out = eqpalg(&["--format", "json", "teleport-check", "--trials", "3"]);
    assert_eq!(code(&out), 0);
    stdout_json(&out);
}
