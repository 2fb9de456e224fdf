//! Browser bindings: teleport a chosen qubit, run a program, and sample
//! measurement statistics. Every export returns a JSON string.

use eqpalg::ast::{Action, KetLiteral, Measure, ProcDef, ProcessTerm, SourceFile, VarDecl, COMPUTATIONAL_BASIS};
use eqpalg::engine::{run, SchedulerPolicy, TraceEnd, TransitionLabel};
use eqpalg::parser::parse;
use eqpalg::protocol::{self, EXAMPLES};
use eqpalg::quantum::{Complex64, DensityOperator, Ket};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_SHOTS: u32 = 100_000;
const MAX_STEPS: usize = 100_000;

#[derive(Serialize)]
struct Branch {
    outcome: String,
    probability: f64,
    fidelity: f64,
    cbits: u64,
    ebits: u64,
    qubits: u64,
    bloch: [f64; 3],
}

/// Bloch vector of a one-qubit state.
fn bloch(rho: &DensityOperator) -> [f64; 3] {
    let m = rho.matrix().data();
    [2.0 * m[1].re, -2.0 * m[1].im, m[0].re - m[3].re]
}

fn policy(name: &str) -> Result<SchedulerPolicy, String> {
    match name {
        "det" => Ok(SchedulerPolicy::Deterministic),
        "random" => Ok(SchedulerPolicy::Random),
        "exhaustive" => Ok(SchedulerPolicy::Exhaustive { bound: 64 }),
        other => Err(format!("unknown policy `{other}`")),
    }
}

/// Teleports `alpha|0> + beta|1>` (normalised here) through every outcome
/// of Alice's measurement.
pub fn teleport_json(alpha: Complex64, beta: Complex64) -> Result<String, String> {
    let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return Err("the amplitudes must not both be zero".into());
    }
    let input = Ket::qubit(alpha / norm, beta / norm).map_err(|e| e.to_string())?;
    let runs = protocol::teleport_all_branches(&input, None).map_err(|e| e.to_string())?;
    let branches: Vec<Branch> = runs
        .iter()
        .map(|(r, trace)| Branch {
            outcome: r.branch.clone(),
            probability: trace.probability(),
            fidelity: r.fidelity,
            cbits: r.tally.cbits_sent,
            ebits: r.tally.ebits_consumed,
            qubits: r.tally.qubits_transferred(),
            bloch: bloch(&r.output_state),
        })
        .collect();
    let a = input.amplitudes();
    Ok(json!({
        "input": [[a[0].re, a[0].im], [a[1].re, a[1].im]],
        "input_bloch": bloch(&DensityOperator::from_ket(&input)),
        "branches": branches,
    })
    .to_string())
}

/// Parses and runs `source`, returning the trace document with a readable
/// label for each step. A runtime error still yields the partial trace.
pub fn run_json(source: &str, seed: u64, policy_name: &str, max_steps: usize) -> Result<String, String> {
    let file = parse(source).map_err(|e| format!("{}:{}: {}", e.line, e.column, e.message))?;
    let policy = policy(policy_name)?;
    let (trace, error) = match run(&file, policy, max_steps.min(MAX_STEPS), seed) {
        Ok(t) => (t, None),
        Err(e) => match e.partial {
            Some(t) => (t, Some(e.error.to_string())),
            None => return Err(e.error.to_string()),
        },
    };
    let lines: Vec<String> = trace.labels().map(TransitionLabel::to_string).collect();
    let mut doc = serde_json::to_value(trace.document()).map_err(|e| e.to_string())?;
    if let Some(err) = error {
        doc["final"] = json!(TraceEnd::Error.name());
        doc["error"] = json!(err);
    }
    Ok(json!({ "trace": doc, "lines": lines }).to_string())
}

/// Prepares `cos(θ/2)|0> + sin(θ/2)|1>`, measures it `shots` times under
/// the random scheduler and counts the outcomes.
pub fn measure_json(theta: f64, shots: u32, seed: u64) -> Result<String, String> {
    if !theta.is_finite() {
        return Err("angle must be finite".into());
    }
    let shots = shots.min(MAX_SHOTS);
    let (a, b) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let body = ProcessTerm::block(
        vec![
            VarDecl::qubit(
                "x",
                Some(KetLiteral::Pair(Complex64::new(a, 0.0), Complex64::new(b, 0.0))),
            ),
            VarDecl::integer("p", None),
        ],
        ProcessTerm::prefix(
            Action::Measure(Measure {
                observable: COMPUTATIONAL_BASIS.into(),
                qubits: vec!["x".into()],
                results: vec!["p".into()],
            }),
            ProcessTerm::End,
        ),
    );
    let file = SourceFile {
        defs: vec![ProcDef {
            name: "M".into(),
            params: vec![],
            body,
        }],
        spec: None,
        main: Some("M".into()),
    };
    let mut zeros = 0u32;
    for shot in 0..shots {
        let trace = run(&file, SchedulerPolicy::Random, 10, seed.wrapping_add(u64::from(shot)))
            .map_err(|e| e.error.to_string())?;
        zeros += u32::from(trace.last().ctx.value("p") == Some(0));
    }
    Ok(json!({
        "shots": shots,
        "zeros": zeros,
        "ones": shots - zeros,
        "born_zero": a * a,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn teleport(alpha_re: f64, alpha_im: f64, beta_re: f64, beta_im: f64) -> Result<String, String> {
    teleport_json(Complex64::new(alpha_re, alpha_im), Complex64::new(beta_re, beta_im))
}

#[wasm_bindgen(js_name = runProgram)]
pub fn run_program(source: &str, seed: u64, policy: &str, max_steps: usize) -> Result<String, String> {
    run_json(source, seed, policy, max_steps)
}

#[wasm_bindgen(js_name = measureStatistics)]
pub fn measure_statistics(theta: f64, shots: u32, seed: u64) -> Result<String, String> {
    measure_json(theta, shots, seed)
}

/// Names and sources of the bundled programs.
#[wasm_bindgen]
pub fn examples() -> String {
    let list: Vec<_> = EXAMPLES
        .iter()
        .map(|(n, s)| json!({ "name": n, "source": s }))
        .collect();
    serde_json::Value::Array(list).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn teleport_reports_four_faithful_branches() {
        let doc: Value =
            serde_json::from_str(&teleport_json(Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)).unwrap()).unwrap();
        let branches = doc["branches"].as_array().unwrap();
        assert_eq!(branches.len(), 4);
        for b in branches {
            assert!(b["fidelity"].as_f64().unwrap() > 1.0 - 1e-9);
            assert_eq!(b["cbits"], 2);
            assert!((b["probability"].as_f64().unwrap() - 0.25).abs() < 1e-9);
        }
        assert!(teleport_json(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn run_returns_labels_and_partial_traces() {
        let doc: Value = serde_json::from_str(&run_json(protocol::RECEIVE_H_SOURCE, 0, "det", 100).unwrap()).unwrap();
        assert_eq!(doc["lines"], json!(["τ [g: x]", "H[x]"]));
        assert_eq!(doc["trace"]["final"], "terminated");
        let alias = "P := [ x: Qubit . (d?y . CNOT[x, y] . end || d!x . end) \\ {d} ]\nmain P";
        let doc: Value = serde_json::from_str(&run_json(alias, 0, "det", 100).unwrap()).unwrap();
        assert_eq!(doc["trace"]["final"], "error");
        assert!(run_json("P := g?x .", 0, "det", 10).unwrap_err().starts_with("1:"));
        assert!(run_json(protocol::RECEIVE_H_SOURCE, 0, "fair", 10).is_err());
    }

    #[test]
    fn measurement_counts_follow_the_angle() {
        let doc: Value = serde_json::from_str(&measure_json(std::f64::consts::FRAC_PI_2, 2000, 0).unwrap()).unwrap();
        let zeros = doc["zeros"].as_f64().unwrap() / 2000.0;
        assert!((zeros - 0.5).abs() < 0.05, "{zeros}");
        let doc: Value = serde_json::from_str(&measure_json(0.0, 50, 0).unwrap()).unwrap();
        assert_eq!(doc["zeros"], 50);
    }
}
