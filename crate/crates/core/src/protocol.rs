//! Teleportation and EPR preparation as eQPAlg programs, the resource
//! accounting over their traces, and the checker for the teleportation
//! specification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ast::*;
use crate::engine::{
    Configuration, Engine, EngineError, RunError, SchedulerPolicy, TauCause, Trace, TraceEnd, TransitionLabel,
};
use crate::parser::{parse, print_action, ParseError};
use crate::quantum::{complex, DensityOperator, Ket, RhoDigest, TOLERANCE};

pub const TELEPORT_SOURCE: &str = include_str!("../examples/teleport.eqp");
pub const BUILDEPR_SOURCE: &str = include_str!("../examples/buildepr.eqp");
pub const HANDOFF_SOURCE: &str = include_str!("../examples/handoff.eqp");
pub const RECEIVE_H_SOURCE: &str = include_str!("../examples/receive_h.eqp");
pub const RECEIVE_CNOT_SOURCE: &str = include_str!("../examples/receive_cnot.eqp");

/// The bundled programs by file name.
pub const EXAMPLES: [(&str, &str); 5] = [
    ("teleport.eqp", TELEPORT_SOURCE),
    ("buildepr.eqp", BUILDEPR_SOURCE),
    ("handoff.eqp", HANDOFF_SOURCE),
    ("receive_h.eqp", RECEIVE_H_SOURCE),
    ("receive_cnot.eqp", RECEIVE_CNOT_SOURCE),
];

/// Process whose invocations are counted as ebits.
pub const EPR_PROCESS: &str = "BuildEPR";

/// Steps allowed for one teleportation run.
const TELEPORT_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Run(#[from] Box<RunError>),
    #[error("run did not terminate: {0}")]
    Unfinished(&'static str),
    #[error("malformed specification: {0}")]
    MalformedSpec(String),
    #[error("unknown mutation `{0}`")]
    UnknownMutation(String),
    #[error("unsupported program: {0}")]
    Unsupported(String),
    #[error("input must be a normalized one-qubit state")]
    BadInput,
}

/// Resources a trace used.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ResourceTally {
    /// Classical synchronisations.
    pub cbits_sent: u64,
    /// Qubits received fresh from outside.
    pub qubits_sent_fresh: u64,
    /// Invocations of the EPR preparation.
    pub ebits_consumed: u64,
    /// Qubit references passed between components.
    pub qubit_refs_passed: u64,
}

impl ResourceTally {
    pub fn of(trace: &Trace) -> ResourceTally {
        let mut t = ResourceTally::default();
        for label in trace.labels() {
            match label {
                TransitionLabel::Tau(TauCause::ClassicalSync { .. }) => t.cbits_sent += 1,
                TransitionLabel::Tau(TauCause::QuantumSync { .. }) => t.qubit_refs_passed += 1,
                TransitionLabel::Tau(TauCause::Call { name }) if name == EPR_PROCESS => t.ebits_consumed += 1,
                TransitionLabel::QRecvFresh { .. } => t.qubits_sent_fresh += 1,
                _ => {}
            }
        }
        t
    }

    /// Qubits moved between parties by any means.
    pub fn qubits_transferred(&self) -> u64 {
        self.qubits_sent_fresh + self.qubit_refs_passed
    }
}

/// Outcome of one teleportation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeleportReport {
    #[serde(serialize_with = "ket_amplitudes")]
    pub input_state: Ket,
    /// Reduced state of the qubit Bob ends up holding.
    #[serde(serialize_with = "digest")]
    pub output_state: DensityOperator,
    pub fidelity: f64,
    pub tally: ResourceTally,
    /// Alice's measurement outcome `pq`.
    pub branch: String,
}

fn ket_amplitudes<S: Serializer>(k: &Ket, s: S) -> Result<S::Ok, S::Error> {
    let v: Vec<[f64; 2]> = k.amplitudes().iter().map(|z| [z.re, z.im]).collect();
    v.serialize(s)
}

fn digest<S: Serializer>(rho: &DensityOperator, s: S) -> Result<S::Ok, S::Error> {
    RhoDigest::of(rho).serialize(s)
}

/// Ways of breaking the teleportation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mutation {
    DropX,
    DropZ,
    DropFirstCbit,
    DropSecondCbit,
    /// Alice hands psi to Bob over a quantum channel instead.
    SendQubit,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::DropX,
        Mutation::DropZ,
        Mutation::DropFirstCbit,
        Mutation::DropSecondCbit,
        Mutation::SendQubit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mutation::DropX => "drop-x",
            Mutation::DropZ => "drop-z",
            Mutation::DropFirstCbit => "drop-first-cbit",
            Mutation::DropSecondCbit => "drop-second-cbit",
            Mutation::SendQubit => "send-qubit",
        }
    }

    /// Source edits as (original, replacement) pairs.
    fn edits(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            Mutation::DropX => &[("X[s, z] . ", "")],
            Mutation::DropZ => &[("Z[r, z] . ", "")],
            Mutation::DropFirstCbit => &[("c!p . ", ""), ("c?r . ", "")],
            Mutation::DropSecondCbit => &[("c!q . ", ""), ("c?s . ", "")],
            Mutation::SendQubit => &[
                (
                    "CNOT[x, y] . H[x] .\n  [ p: Integer, q: Integer . measure[{x, y} -> p, q] . c!p . c!q . end ]",
                    "[ p: Integer, q: Integer . d!y . end ]",
                ),
                ("c?r . c?s . X[s, z] . Z[r, z] . end", "d?u . end"),
                ("\\ {c}", "\\ {c, d}"),
            ],
        }
    }

    /// Variable holding the delivered state.
    fn output(&self) -> &'static str {
        match self {
            Mutation::SendQubit => "psi",
            _ => "b",
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutation {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Mutation, ProtocolError> {
        match s {
            "drop-x" | "drop-x-correction" => Ok(Mutation::DropX),
            "drop-z" | "drop-z-correction" => Ok(Mutation::DropZ),
            "drop-first-cbit" => Ok(Mutation::DropFirstCbit),
            "drop-second-cbit" => Ok(Mutation::DropSecondCbit),
            "send-qubit" => Ok(Mutation::SendQubit),
            other => Err(ProtocolError::UnknownMutation(other.to_string())),
        }
    }
}

/// Applies `mutation` to a teleportation program's source.
pub fn mutate(source: &str, mutation: Option<Mutation>) -> Result<String, ProtocolError> {
    let mut src = source.to_string();
    for (from, to) in mutation.map_or(&[][..], |m| m.edits()) {
        if !src.contains(from) {
            return Err(ProtocolError::Unsupported(format!(
                "mutation `{}` expects the text `{from}`",
                mutation.expect("edits come from a mutation")
            )));
        }
        src = src.replacen(from, to, 1);
    }
    Ok(src)
}

/// The bundled teleportation program with `input` as the state of psi.
pub fn teleport_program(input: &Ket, mutation: Option<Mutation>) -> Result<SourceFile, ProtocolError> {
    teleport_program_from(TELEPORT_SOURCE, input, mutation)
}

/// A teleportation program whose `Teleport` process declares the input
/// qubit `psi` in its outermost block, with `input` as the state of psi.
pub fn teleport_program_from(
    source: &str,
    input: &Ket,
    mutation: Option<Mutation>,
) -> Result<SourceFile, ProtocolError> {
    if input.nqubits() != 1 {
        return Err(ProtocolError::BadInput);
    }
    let mut file = parse(&mutate(source, mutation)?)?;
    let missing = || ProtocolError::Unsupported("expected `Teleport := [ psi: Qubit ... ]`".into());
    let def = file
        .defs
        .iter_mut()
        .find(|d| d.name == "Teleport")
        .ok_or_else(missing)?;
    let ProcessTerm::DeclBlock(decls, _) = &mut def.body else {
        return Err(missing());
    };
    let psi = decls
        .iter_mut()
        .find(|d| d.name == "psi" && d.vtype == VarType::Qubit)
        .ok_or_else(missing)?;
    psi.init = Some(Init::Ket(KetLiteral::from_ket(input)));
    file.main = Some("Teleport".into());
    Ok(file)
}

fn report(input: &Ket, trace: &Trace, mutation: Option<Mutation>) -> Result<TeleportReport, ProtocolError> {
    if trace.end != TraceEnd::Terminated {
        return Err(ProtocolError::Unfinished(trace.end.name()));
    }
    let ctx = &trace.last().ctx;
    let output = ctx.marginal(&[mutation.map_or("b", |m| m.output())])?;
    let bit = |v: &str| ctx.value(v).map_or('?', |b| if b == 1 { '1' } else { '0' });
    Ok(TeleportReport {
        input_state: input.clone(),
        fidelity: output.fidelity(input).map_err(|source| EngineError::Quantum {
            rule: "fidelity",
            source,
        })?,
        output_state: output,
        tally: ResourceTally::of(trace),
        branch: [bit("p"), bit("q")].iter().collect(),
    })
}

/// Runs teleportation once; the policy decides Alice's measurement outcome.
pub fn teleport(input: &Ket, seed: u64, policy: SchedulerPolicy) -> Result<TeleportReport, ProtocolError> {
    teleport_traced(input, seed, policy, None).map(|(r, _)| r)
}

pub fn teleport_traced(
    input: &Ket,
    seed: u64,
    policy: SchedulerPolicy,
    mutation: Option<Mutation>,
) -> Result<(TeleportReport, Trace), ProtocolError> {
    let file = teleport_program(input, mutation)?;
    let trace = crate::engine::run(&file, policy, TELEPORT_STEPS, seed)?;
    Ok((report(input, &trace, mutation)?, trace))
}

/// Runs teleportation once for every outcome of Alice's measurement.
pub fn teleport_all_branches(
    input: &Ket,
    mutation: Option<Mutation>,
) -> Result<Vec<(TeleportReport, Trace)>, ProtocolError> {
    teleport_all_branches_from(TELEPORT_SOURCE, input, mutation)
}

fn teleport_all_branches_from(
    source: &str,
    input: &Ket,
    mutation: Option<Mutation>,
) -> Result<Vec<(TeleportReport, Trace)>, ProtocolError> {
    let file = teleport_program_from(source, input, mutation)?;
    let engine = Engine::new(&file);
    let initial = engine.initial("Teleport")?;
    engine
        .branches(initial, TELEPORT_STEPS, 16)?
        .into_iter()
        .map(|t| Ok((report(input, &t, mutation)?, t)))
        .collect()
}

/// Result of running the EPR preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct EprResult {
    pub trace: Trace,
    pub state: DensityOperator,
}

pub fn build_epr() -> Result<EprResult, ProtocolError> {
    let file = parse(BUILDEPR_SOURCE)?;
    let trace = crate::engine::run(&file, SchedulerPolicy::Deterministic, 100, 0)?;
    if trace.end != TraceEnd::Terminated {
        return Err(ProtocolError::Unfinished(trace.end.name()));
    }
    let state = trace.last().ctx.marginal(&["a", "b"])?;
    Ok(EprResult { trace, state })
}

/// A random normalized qubit.
pub fn random_qubit<R: Rng>(rng: &mut R) -> Ket {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            let k = Ket::qubit(complex(v[0] / norm, v[1] / norm), complex(v[2] / norm, v[3] / norm));
            return k.expect("normalized by construction");
        }
    }
}

/// Outcome of [`check_spec`]: every violated conjunct, or none.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecVerdict {
    pub failures: Vec<String>,
}

impl SpecVerdict {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks a teleportation trace against a specification of the form
/// `var A {..} /\ var B {..} /\ |shared> /\ |input> /\ resources`.
///
/// The first variable group is the sender and the second the receiver.
/// Each state must name either the subscript of a shared parallel
/// composition or a qubit variable. The equation's left side bounds the
/// resources used, and the right side asks for a faithful delivery.
pub fn check_spec(spec: &SpecStatement, trace: &Trace, report: &TeleportReport) -> Result<SpecVerdict, ProtocolError> {
    if let Some(op) = spec.ops.iter().find(|o| **o != SpecOp::And) {
        return Err(ProtocolError::MalformedSpec(format!(
            "only conjunction is supported between clauses, found `{}`",
            op.symbol()
        )));
    }
    if spec.vars.len() != 2 {
        return Err(ProtocolError::MalformedSpec(
            "expected one variable group per party".into(),
        ));
    }
    let ctx = &trace.last().ctx;
    for v in spec.all_vars() {
        if ctx.lookup(&v).is_none() {
            return Err(ProtocolError::MalformedSpec(format!("unknown variable `{v}`")));
        }
    }
    let mut failures = vec![];

    // variable groups: owned by one party each
    let (sender, receiver) = (&spec.vars[0], &spec.vars[1]);
    let a: BTreeSet<&Name> = sender.vars.iter().collect();
    if let Some(shared) = receiver.vars.iter().find(|v| a.contains(v)) {
        failures.push(format!(
            "`{shared}` belongs to both {} and {}",
            sender.party, receiver.party
        ));
    }
    for g in [sender, receiver] {
        if !g.vars.iter().any(|v| ctx.lookup(v) == Some(VarType::Qubit)) {
            failures.push(format!("{} holds no qubit", g.party));
        }
    }

    // states
    let shared_names = shared_state_names(trace);
    for s in &spec.states {
        if !shared_names.contains(s) && ctx.lookup(s) != Some(VarType::Qubit) {
            failures.push(format!("state |{s}> is neither a shared state nor a qubit"));
        }
    }
    let qubits = |g: &VarGroup| -> Vec<Name> {
        g.vars
            .iter()
            .filter(|v| ctx.lookup(v) == Some(VarType::Qubit))
            .cloned()
            .collect()
    };
    if !entangled_before_communication(trace, &qubits(sender), &qubits(receiver)) {
        failures.push(format!(
            "no entangled pair shared by {} and {} before the first classical message",
            sender.party, receiver.party
        ));
    }

    // resources
    let tally = report.tally;
    for eq in &spec.equations {
        if eq.relation != SpecOp::Geq {
            return Err(ProtocolError::MalformedSpec(format!(
                "unsupported relation `{}`",
                eq.relation.symbol()
            )));
        }
        let ebits = eq.lhs_amount(Resource::Ebit);
        let cbits = eq.lhs_amount(Resource::Cbit);
        let qubits_allowed = eq.lhs_amount(Resource::Qubit);
        if tally.ebits_consumed > ebits {
            failures.push(format!("used {} ebits, budget {ebits}", tally.ebits_consumed));
        }
        if tally.cbits_sent > cbits {
            failures.push(format!("sent {} cbits, budget {cbits}", tally.cbits_sent));
        }
        if tally.qubits_transferred() > qubits_allowed {
            failures.push(format!(
                "transferred {} qubits ({} fresh, {} by reference), budget {qubits_allowed}",
                tally.qubits_transferred(),
                tally.qubits_sent_fresh,
                tally.qubit_refs_passed
            ));
        }
        if eq.rhs_amount(Resource::Qubit) > 0 && report.fidelity < 1.0 - TOLERANCE {
            failures.push(format!(
                "qubit not delivered: fidelity {:.12} in branch {}",
                report.fidelity, report.branch
            ));
        }
    }
    Ok(SpecVerdict { failures })
}

fn shared_state_names(trace: &Trace) -> BTreeSet<Name> {
    fn collect(t: &ProcessTerm, out: &mut BTreeSet<Name>) {
        match t {
            ProcessTerm::ParShared(a, b, s) => {
                out.insert(s.clone());
                collect(a, out);
                collect(b, out);
            }
            ProcessTerm::Par(a, b) | ProcessTerm::Seq(a, b) => {
                collect(a, out);
                collect(b, out);
            }
            ProcessTerm::Prefix(_, c) | ProcessTerm::Restrict(c, _) | ProcessTerm::DeclBlock(_, c) => collect(c, out),
            ProcessTerm::Nil | ProcessTerm::End | ProcessTerm::Invoke(..) => {}
        }
    }
    let mut out = BTreeSet::new();
    collect(&trace.initial.term, &mut out);
    for s in &trace.steps {
        collect(&s.config.term, &mut out);
    }
    out
}

/// Some sender qubit and receiver qubit form a pure pair with a maximally
/// mixed half, at some point before the first classical synchronisation.
fn entangled_before_communication(trace: &Trace, sender: &[Name], receiver: &[Name]) -> bool {
    let configs = std::iter::once(&trace.initial).chain(trace.steps.iter().map(|s| &s.config));
    let labels = std::iter::once(None).chain(trace.steps.iter().map(|s| Some(&s.label)));
    let half = DensityOperator::maximally_mixed(1);
    for (cfg, label) in configs.zip(labels) {
        if matches!(label, Some(TransitionLabel::Tau(TauCause::ClassicalSync { .. }))) {
            return false;
        }
        for u in sender {
            for v in receiver {
                let (Ok(pair), Ok(one)) = (cfg.ctx.marginal(&[u, v]), cfg.ctx.marginal(&[u])) else {
                    continue;
                };
                if (pair.purity() - 1.0).abs() < 1e-6 && one.matrix().approx_eq(half.matrix(), 1e-6) {
                    return true;
                }
            }
        }
    }
    false
}

/// Aggregate of a multi-trial teleportation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeleportCheck {
    pub trials: usize,
    pub seed: u64,
    pub mutation: Option<String>,
    /// Lowest fidelity seen in each branch `pq`.
    pub min_fidelity: BTreeMap<String, f64>,
    pub runs: usize,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    #[serde(serialize_with = "ket_amplitudes")]
    pub input_state: Ket,
    pub branch: String,
    pub reasons: Vec<String>,
}

impl TeleportCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Teleports `trials` random states through every measurement branch and
/// checks each run against the bundled specification.
pub fn teleport_check(trials: usize, seed: u64, mutation: Option<Mutation>) -> Result<TeleportCheck, ProtocolError> {
    teleport_check_source(TELEPORT_SOURCE, trials, seed, mutation)
}

/// [`teleport_check`] for another rendition of the protocol, checked
/// against its own specification.
pub fn teleport_check_source(
    source: &str,
    trials: usize,
    seed: u64,
    mutation: Option<Mutation>,
) -> Result<TeleportCheck, ProtocolError> {
    let spec = parse(source)?
        .spec
        .ok_or_else(|| ProtocolError::Unsupported("the program has no specification".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = TeleportCheck {
        trials,
        seed,
        mutation: mutation.map(|m| m.name().to_string()),
        min_fidelity: BTreeMap::new(),
        runs: 0,
        failures: vec![],
    };
    for trial in 0..trials {
        let input = random_qubit(&mut rng);
        let runs = match teleport_all_branches_from(source, &input, mutation) {
            Ok(runs) => runs,
            Err(e) => {
                check.failures.push(TrialFailure {
                    trial,
                    input_state: input,
                    branch: "-".into(),
                    reasons: vec![e.to_string()],
                });
                continue;
            }
        };
        for (report, trace) in runs {
            check.runs += 1;
            let entry = check.min_fidelity.entry(report.branch.clone()).or_insert(1.0);
            *entry = entry.min(report.fidelity);
            let verdict = check_spec(&spec, &trace, &report)?;
            if !verdict.passed() {
                check.failures.push(TrialFailure {
                    trial,
                    input_state: input.clone(),
                    branch: report.branch,
                    reasons: verdict.failures,
                });
            }
        }
    }
    Ok(check)
}

/// An action touching a qubit owned by the other side of `||_ψ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OwnershipViolation {
    pub definition: Name,
    pub state: Name,
    pub qubit: Name,
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl fmt::Display for OwnershipViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: both sides of ||_{} use `{}` (left: {}; right: {})",
            self.definition,
            self.state,
            self.qubit,
            self.left.join(", "),
            self.right.join(", ")
        )
    }
}

/// Checks that the two sides of every `||_ψ` act on disjoint sets of
/// outside qubits. Invocations are unfolded. Returns how many shared
/// compositions were checked.
pub fn distributed_ownership_check(file: &SourceFile) -> Result<usize, Vec<OwnershipViolation>> {
    let defs = file.def_map();
    let mut checked = 0;
    let mut violations = vec![];
    for def in &file.defs {
        let scope: BTreeMap<Name, VarType> = def.params.iter().map(|p| (p.name.clone(), p.vtype)).collect();
        visit_shared(&def.body, &scope, &def.name, &defs, &mut checked, &mut violations);
    }
    if violations.is_empty() {
        Ok(checked)
    } else {
        Err(violations)
    }
}

fn visit_shared(
    t: &ProcessTerm,
    scope: &BTreeMap<Name, VarType>,
    def: &str,
    defs: &BTreeMap<Name, ProcDef>,
    checked: &mut usize,
    out: &mut Vec<OwnershipViolation>,
) {
    match t {
        ProcessTerm::ParShared(l, r, s) => {
            *checked += 1;
            let (ul, ur) = (outside_uses(l, defs), outside_uses(r, defs));
            for (q, left) in &ul {
                if scope.get(q) != Some(&VarType::Qubit) {
                    continue;
                }
                if let Some(right) = ur.get(q) {
                    out.push(OwnershipViolation {
                        definition: def.to_string(),
                        state: s.clone(),
                        qubit: q.clone(),
                        left: left.clone(),
                        right: right.clone(),
                    });
                }
            }
            visit_shared(l, scope, def, defs, checked, out);
            visit_shared(r, scope, def, defs, checked, out);
        }
        ProcessTerm::Par(a, b) | ProcessTerm::Seq(a, b) => {
            visit_shared(a, scope, def, defs, checked, out);
            visit_shared(b, scope, def, defs, checked, out);
        }
        ProcessTerm::Restrict(c, _) => visit_shared(c, scope, def, defs, checked, out),
        ProcessTerm::Prefix(a, c) => {
            let mut inner = scope.clone();
            if let Action::QuantumRecv(_, y) = a {
                inner.insert(y.clone(), VarType::Qubit);
            }
            visit_shared(c, &inner, def, defs, checked, out);
        }
        ProcessTerm::DeclBlock(decls, c) => {
            let mut inner = scope.clone();
            inner.extend(decls.iter().map(|d| (d.name.clone(), d.vtype)));
            visit_shared(c, &inner, def, defs, checked, out);
        }
        ProcessTerm::Nil | ProcessTerm::End | ProcessTerm::Invoke(..) => {}
    }
}

/// Free variables of `t` mapped to the actions that use them, with
/// invocations unfolded once per process.
fn outside_uses(t: &ProcessTerm, defs: &BTreeMap<Name, ProcDef>) -> BTreeMap<Name, Vec<String>> {
    fn walk(
        t: &ProcessTerm,
        bound: &mut Vec<Name>,
        defs: &BTreeMap<Name, ProcDef>,
        unfolding: &mut Vec<Name>,
        out: &mut BTreeMap<Name, Vec<String>>,
    ) {
        match t {
            ProcessTerm::Nil | ProcessTerm::End => {}
            ProcessTerm::Prefix(a, c) => {
                for v in a.occurrences() {
                    if !bound.contains(&v) {
                        out.entry(v).or_default().push(print_action(a));
                    }
                }
                let binder = matches!(a, Action::QuantumRecv(..));
                if let Action::QuantumRecv(_, y) = a {
                    bound.push(y.clone());
                }
                walk(c, bound, defs, unfolding, out);
                if binder {
                    bound.pop();
                }
            }
            ProcessTerm::Seq(a, b) | ProcessTerm::Par(a, b) | ProcessTerm::ParShared(a, b, _) => {
                walk(a, bound, defs, unfolding, out);
                walk(b, bound, defs, unfolding, out);
            }
            ProcessTerm::Restrict(c, _) => walk(c, bound, defs, unfolding, out),
            ProcessTerm::DeclBlock(decls, c) => {
                let n = decls.len();
                bound.extend(decls.iter().map(|d| d.name.clone()));
                walk(c, bound, defs, unfolding, out);
                bound.truncate(bound.len() - n);
            }
            ProcessTerm::Invoke(name, args) => {
                let Some(def) = defs.get(name) else { return };
                if unfolding.contains(name) || def.params.len() != args.len() {
                    return;
                }
                // uses inside the body, renamed to the caller's arguments
                let mut inner = BTreeMap::new();
                unfolding.push(name.clone());
                walk(&def.body, &mut vec![], defs, unfolding, &mut inner);
                unfolding.pop();
                for (p, a) in def.params.iter().zip(args) {
                    if bound.contains(a) {
                        continue;
                    }
                    if let Some(uses) = inner.remove(&p.name) {
                        out.entry(a.clone()).or_default().extend(uses);
                    }
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(t, &mut vec![], defs, &mut vec![], &mut out);
    out
}

/// Whether a configuration's state over `names` equals `rho`.
pub fn marginal_equals(cfg: &Configuration, names: &[&str], rho: &DensityOperator) -> bool {
    cfg.ctx
        .marginal(names)
        .is_ok_and(|m| m.nqubits() == rho.nqubits() && m.matrix().approx_eq(rho.matrix(), TOLERANCE))
}
