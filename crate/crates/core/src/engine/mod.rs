//! Labelled transition semantics over configurations `⟨P, C⟩`.
//!
//! A single global [`Context`] is shared by every parallel component. Each
//! rule instance enabled at the top of a term, or under `||`, `;` and
//! restriction, becomes one [`Transition`]. Open inputs are only offered when
//! an [`Environment`] supplies the values to receive.

mod graph;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use rand::Rng;
use thiserror::Error;

use crate::ast::*;
use crate::parser::{print_action, print_term};
use crate::quantum::{DensityOperator, Gate, QuantumError, TOLERANCE};

pub use graph::{Edge, StateGraph};
pub use trace::{run, RunError, StepRecord, Trace, TraceDocument, TraceEnd, TraceStep, TRACE_SCHEMA};

/// One entry of the declaration stack.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Binding {
    pub name: Name,
    pub vtype: VarType,
    /// Number of declaration scopes opened before this one.
    pub depth: usize,
}

/// `⟨s, q = ρ, f⟩`: declarations, the quantum register with its joint
/// state, and the classical store.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    stack: Vec<Binding>,
    register: Vec<Name>,
    state: DensityOperator,
    classical: BTreeMap<Name, u64>,
    scopes: usize,
}

impl Default for Context {
    fn default() -> Self {
        Context::new()
    }
}

impl Context {
    pub fn new() -> Context {
        Context {
            stack: vec![],
            register: vec![],
            state: DensityOperator::empty(),
            classical: BTreeMap::new(),
            scopes: 0,
        }
    }

    pub fn stack(&self) -> &[Binding] {
        &self.stack
    }

    pub fn register(&self) -> &[Name] {
        &self.register
    }

    pub fn state(&self) -> &DensityOperator {
        &self.state
    }

    pub fn classical(&self) -> &BTreeMap<Name, u64> {
        &self.classical
    }

    /// Type of the innermost binding of `name`.
    pub fn lookup(&self, name: &str) -> Option<VarType> {
        self.stack.iter().rev().find(|b| b.name == name).map(|b| b.vtype)
    }

    /// Register position of a qubit.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.register.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<u64> {
        self.classical.get(name).copied()
    }

    /// `name`, or `name#k` if `name` is already declared.
    fn fresh_binding(&self, name: &str) -> Name {
        let taken = |n: &str| self.stack.iter().any(|b| b.name == n);
        if !taken(name) {
            return name.to_string();
        }
        (1..)
            .map(|k| format!("{name}#{k}"))
            .find(|n| !taken(n))
            .expect("unbounded")
    }

    /// Appends a one-qubit variable in state `sigma`, giving `ρ ⊗ σ`.
    /// Returns the name actually used, which differs from `name` when it
    /// is already declared.
    pub fn declare_qubit(&mut self, name: &str, sigma: &DensityOperator) -> Result<Name, EngineError> {
        if sigma.nqubits() != 1 {
            return Err(EngineError::Quantum {
                rule: "DECL",
                source: QuantumError::DimensionMismatch {
                    expected: 2,
                    found: sigma.dim(),
                },
            });
        }
        let actual = self.fresh_binding(name);
        self.stack.push(Binding {
            name: actual.clone(),
            vtype: VarType::Qubit,
            depth: self.scopes,
        });
        self.register.push(actual.clone());
        self.state = self.state.tensor(sigma);
        Ok(actual)
    }

    pub fn declare_integer(&mut self, name: &str, value: u64) -> Name {
        let actual = self.fresh_binding(name);
        self.stack.push(Binding {
            name: actual.clone(),
            vtype: VarType::Integer,
            depth: self.scopes,
        });
        self.classical.insert(actual.clone(), value);
        actual
    }

    /// Reduced state of the named qubits, in register order.
    pub fn marginal(&self, names: &[&str]) -> Result<DensityOperator, EngineError> {
        let keep = names
            .iter()
            .map(|n| self.position(n).ok_or_else(|| unbound(n, "marginal")))
            .collect::<Result<Vec<_>, _>>()?;
        self.state.partial_trace(&keep).map_err(|source| EngineError::Quantum {
            rule: "marginal",
            source,
        })
    }

    /// Checks the context invariants, including those of `ρ`.
    pub fn check_invariants(&self) -> Result<(), String> {
        for q in &self.register {
            if !self.stack.iter().any(|b| &b.name == q && b.vtype == VarType::Qubit) {
                return Err(format!("register entry `{q}` is not a declared qubit"));
            }
        }
        if self.state.nqubits() != self.register.len() {
            return Err(format!(
                "state has {} qubits but the register has {}",
                self.state.nqubits(),
                self.register.len()
            ));
        }
        for v in self.classical.keys() {
            if !self.stack.iter().any(|b| &b.name == v && b.vtype == VarType::Integer) {
                return Err(format!("classical entry `{v}` is not a declared integer"));
            }
        }
        self.state.validate().map_err(|e| e.to_string())
    }

    fn eval(&self, e: &Expr, rule: &'static str) -> Result<u64, EngineError> {
        match e {
            Expr::Nat(n) => Ok(*n),
            Expr::Var(v) => {
                self.expect_type(v, VarType::Integer, rule)?;
                self.value(v).ok_or_else(|| unbound(v, rule))
            }
            Expr::Add(a, b) => self
                .eval(a, rule)?
                .checked_add(self.eval(b, rule)?)
                .ok_or(EngineError::Overflow { rule }),
        }
    }

    fn expect_type(&self, var: &str, expected: VarType, rule: &'static str) -> Result<(), EngineError> {
        match self.lookup(var) {
            None => Err(unbound(var, rule)),
            Some(found) if found != expected => Err(EngineError::TypeMismatch {
                var: var.to_string(),
                expected,
                found,
                rule,
            }),
            Some(_) => Ok(()),
        }
    }

    fn qubit_position(&self, var: &str, rule: &'static str) -> Result<usize, EngineError> {
        self.expect_type(var, VarType::Qubit, rule)?;
        self.position(var).ok_or_else(|| unbound(var, rule))
    }
}

fn unbound(var: &str, rule: &'static str) -> EngineError {
    EngineError::Unbound {
        var: var.to_string(),
        rule,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub term: ProcessTerm,
    pub ctx: Context,
}

impl Configuration {
    pub fn new(term: ProcessTerm, ctx: Context) -> Configuration {
        Configuration { term, ctx }
    }

    pub fn is_terminated(&self) -> bool {
        is_terminated(&self.term)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}  with q = [{}]",
            print_term(&self.term),
            self.ctx.register.join(", ")
        )?;
        if !self.ctx.classical.is_empty() {
            let vals: Vec<String> = self.ctx.classical.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, ", f = {{{}}}", vals.join(", "))?;
        }
        Ok(())
    }
}

/// `end`, possibly under restriction or in parallel with other finished
/// components.
pub fn is_terminated(term: &ProcessTerm) -> bool {
    match term {
        ProcessTerm::End => true,
        ProcessTerm::Par(a, b) | ProcessTerm::ParShared(a, b, _) => is_terminated(a) && is_terminated(b),
        ProcessTerm::Restrict(body, _) => is_terminated(body),
        _ => false,
    }
}

/// Why a silent step happened.
#[derive(Debug, Clone, PartialEq)]
pub enum TauCause {
    ClassicalSync {
        channel: Name,
        value: u64,
    },
    QuantumSync {
        channel: Name,
        qvar: Name,
    },
    /// `end ; Q` continues as `Q`.
    SeqEnd,
    /// A declaration block allocated its variables.
    Declare {
        names: Vec<Name>,
    },
    /// A process invocation was unfolded.
    Call {
        name: Name,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionLabel {
    Tau(TauCause),
    CSend {
        channel: Name,
        value: u64,
    },
    CRecv {
        channel: Name,
        value: u64,
    },
    QSend {
        channel: Name,
        qvar: Name,
    },
    QRecvFresh {
        channel: Name,
        qvar: Name,
        sigma: DensityOperator,
    },
    QRecvRef {
        channel: Name,
        qvar: Name,
    },
    /// `power` is the classical exponent, when the program gave one.
    Unit {
        gate: Name,
        power: Option<u64>,
        targets: Vec<Name>,
    },
    Meas {
        targets: Vec<Name>,
        outcome: Vec<u8>,
        probability: f64,
    },
}

impl TransitionLabel {
    /// Name of the rule that produced the label.
    pub fn rule(&self) -> &'static str {
        match self {
            TransitionLabel::Tau(TauCause::ClassicalSync { .. }) => "C-COM",
            TransitionLabel::Tau(TauCause::QuantumSync { .. }) => "Q-COM",
            TransitionLabel::Tau(TauCause::SeqEnd) => "SEQ",
            TransitionLabel::Tau(TauCause::Declare { .. }) => "DECL",
            TransitionLabel::Tau(TauCause::Call { .. }) => "CALL",
            TransitionLabel::CSend { .. } => "C-OUT",
            TransitionLabel::CRecv { .. } => "C-IN",
            TransitionLabel::QSend { .. } => "Q-OUT",
            TransitionLabel::QRecvFresh { .. } => "Q-IN1",
            TransitionLabel::QRecvRef { .. } => "Q-IN2",
            TransitionLabel::Unit { .. } => "U-APP",
            TransitionLabel::Meas { .. } => "M-APP",
        }
    }

    /// Short lowercase kind used in trace documents.
    pub fn kind(&self) -> &'static str {
        match self {
            TransitionLabel::Tau(_) => "tau",
            TransitionLabel::CSend { .. } => "csend",
            TransitionLabel::CRecv { .. } => "crecv",
            TransitionLabel::QSend { .. } => "qsend",
            TransitionLabel::QRecvFresh { .. } => "qrecv_fresh",
            TransitionLabel::QRecvRef { .. } => "qrecv_ref",
            TransitionLabel::Unit { .. } => "unit",
            TransitionLabel::Meas { .. } => "meas",
        }
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, TransitionLabel::Tau(_))
    }
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionLabel::Tau(cause) => match cause {
                TauCause::ClassicalSync { channel, value } => write!(f, "τ [{channel}: {value}]"),
                TauCause::QuantumSync { channel, qvar } => write!(f, "τ [{channel}: {qvar}]"),
                TauCause::SeqEnd => write!(f, "τ [seq]"),
                TauCause::Declare { names } => write!(f, "τ [declare {}]", names.join(", ")),
                TauCause::Call { name } => write!(f, "τ [call {name}]"),
            },
            TransitionLabel::CSend { channel, value } => write!(f, "{channel}!{value}"),
            TransitionLabel::CRecv { channel, value } => write!(f, "{channel}?{value}"),
            TransitionLabel::QSend { channel, qvar } => write!(f, "{channel}!{qvar}"),
            TransitionLabel::QRecvFresh { channel, qvar, .. } => write!(f, "{channel}?{qvar}: σ"),
            TransitionLabel::QRecvRef { channel, qvar } => write!(f, "{channel}?{qvar}"),
            TransitionLabel::Unit { gate, power, targets } => match power {
                Some(k) => write!(f, "{gate}^{k}[{}]", targets.join(", ")),
                None => write!(f, "{gate}[{}]", targets.join(", ")),
            },
            TransitionLabel::Meas {
                targets,
                outcome,
                probability,
            } => {
                let bits: String = outcome.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
                write!(f, "measure[{{{}}}] = {bits} (p = {probability:.6})", targets.join(", "))
            }
        }
    }
}

/// One enabled rule instance. Transitions with the same `choice` are the
/// outcomes of a single measurement; distinct values are independent
/// nondeterministic alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub label: TransitionLabel,
    pub next: Configuration,
    pub choice: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerPolicy {
    /// Always the leftmost enabled transition.
    Deterministic,
    /// Uniform over choices, Born-weighted within a measurement.
    Random,
    /// Every alternative, up to `bound` steps deep. A single run follows
    /// the leftmost alternative.
    Exhaustive { bound: usize },
}

impl SchedulerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerPolicy::Deterministic => "det",
            SchedulerPolicy::Random => "random",
            SchedulerPolicy::Exhaustive { .. } => "exhaustive",
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        match self {
            SchedulerPolicy::Exhaustive { bound: 0 } => Err(EngineError::ZeroBound),
            _ => Ok(()),
        }
    }
}

/// Values an open program may receive from outside.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    /// Offered to every open classical receive.
    pub classical_values: Vec<u64>,
    /// One-qubit states offered to every open quantum receive as fresh qubits.
    pub fresh_states: Vec<DensityOperator>,
    /// Whether open quantum receives may also take a reference to any
    /// qubit already in the register.
    pub reference_inputs: bool,
}

impl Environment {
    pub fn closed() -> Environment {
        Environment::default()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{rule}: unbound variable `{var}`")]
    Unbound { var: Name, rule: &'static str },
    #[error("{rule}: `{var}` has type {found}, expected {expected}")]
    TypeMismatch {
        var: Name,
        expected: VarType,
        found: VarType,
        rule: &'static str,
    },
    #[error("unknown process `{0}`")]
    UnknownProcess(Name),
    #[error("`{name}` takes {expected} arguments but was given {found}")]
    Arity { name: Name, expected: usize, found: usize },
    #[error("{rule}: {source}")]
    Quantum {
        rule: &'static str,
        #[source]
        source: QuantumError,
    },
    #[error("{rule}: arithmetic overflow")]
    Overflow { rule: &'static str },
    #[error("{0}")]
    IllFormed(String),
    #[error("no main process")]
    NoMain,
    #[error("exploration budget exceeded: {0}")]
    Budget(String),
    #[error("exhaustive bound must be at least 1")]
    ZeroBound,
}

/// Outcome of one scheduling step.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum StepOutcome {
    Moved(Transition),
    Terminated,
    Deadlocked,
}

type Wrap = Rc<dyn Fn(ProcessTerm) -> ProcessTerm>;

enum Payload {
    Classical(u64),
    Quantum(Name),
}

enum InKind {
    /// Store into this integer variable.
    Classical(Name),
    /// Bind this name in the continuation.
    Quantum(Name),
}

/// A move of a subterm, before it is closed off at the top level.
enum Move {
    Done {
        label: TransitionLabel,
        term: ProcessTerm,
        /// `None` when the context is unchanged.
        ctx: Option<Context>,
        choice: usize,
    },
    Out {
        channel: Name,
        payload: Payload,
        term: ProcessTerm,
        choice: usize,
    },
    In {
        channel: Name,
        kind: InKind,
        cont: ProcessTerm,
        wrap: Wrap,
        choice: usize,
    },
}

impl Move {
    fn channel(&self) -> Option<&str> {
        match self {
            Move::Done { .. } => None,
            Move::Out { channel, .. } | Move::In { channel, .. } => Some(channel),
        }
    }

    fn wrapped(self, f: &Wrap) -> Move {
        match self {
            Move::Done {
                label,
                term,
                ctx,
                choice,
            } => Move::Done {
                label,
                term: f(term),
                ctx,
                choice,
            },
            Move::Out {
                channel,
                payload,
                term,
                choice,
            } => Move::Out {
                channel,
                payload,
                term: f(term),
                choice,
            },
            Move::In {
                channel,
                kind,
                cont,
                wrap,
                choice,
            } => {
                let f = f.clone();
                Move::In {
                    channel,
                    kind,
                    cont,
                    wrap: Rc::new(move |t| f(wrap(t))),
                    choice,
                }
            }
        }
    }
}

fn fresh_choice(ids: &mut usize) -> usize {
    *ids += 1;
    *ids - 1
}

/// Transition relation for one program.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    defs: BTreeMap<Name, ProcDef>,
    env: Environment,
}

impl Engine {
    pub fn new(file: &SourceFile) -> Engine {
        Engine {
            defs: file.def_map(),
            env: Environment::closed(),
        }
    }

    pub fn with_environment(mut self, env: Environment) -> Engine {
        self.env = env;
        self
    }

    /// Configuration for `main`: its body, with any outermost declaration
    /// blocks already allocated in the context.
    pub fn initial(&self, main: &str) -> Result<Configuration, EngineError> {
        let def = self
            .defs
            .get(main)
            .ok_or_else(|| EngineError::UnknownProcess(main.to_string()))?;
        if !def.params.is_empty() {
            return Err(EngineError::IllFormed(format!(
                "main process `{main}` must not take parameters"
            )));
        }
        let mut cfg = Configuration::new(def.body.clone(), Context::new());
        while let ProcessTerm::DeclBlock(decls, body) = &cfg.term {
            let (body, ctx, _) = allocate(decls, body, &cfg.ctx)?;
            cfg = Configuration::new(body, ctx);
        }
        Ok(cfg)
    }

    /// Every transition enabled in `cfg`, leftmost first.
    pub fn enabled_transitions(&self, cfg: &Configuration) -> Result<Vec<Transition>, EngineError> {
        let mut ids = 0;
        let moves = self.moves(&cfg.term, &cfg.ctx, &mut ids)?;
        let mut out = vec![];
        for m in moves {
            match m {
                Move::Done {
                    label,
                    term,
                    ctx,
                    choice,
                } => out.push(Transition {
                    label,
                    next: Configuration::new(term, ctx.unwrap_or_else(|| cfg.ctx.clone())),
                    choice,
                }),
                Move::Out {
                    channel,
                    payload,
                    term,
                    choice,
                } => {
                    let label = match payload {
                        Payload::Classical(value) => TransitionLabel::CSend { channel, value },
                        Payload::Quantum(qvar) => TransitionLabel::QSend { channel, qvar },
                    };
                    out.push(Transition {
                        label,
                        next: Configuration::new(term, cfg.ctx.clone()),
                        choice,
                    });
                }
                Move::In {
                    channel,
                    kind,
                    cont,
                    wrap,
                    ..
                } => self.open_inputs(&channel, &kind, &cont, &wrap, &cfg.ctx, &mut ids, &mut out)?,
            }
        }
        // renumber by first appearance
        let mut seen: Vec<usize> = vec![];
        for t in &mut out {
            t.choice = match seen.iter().position(|c| *c == t.choice) {
                Some(i) => i,
                None => {
                    seen.push(t.choice);
                    seen.len() - 1
                }
            };
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn open_inputs(
        &self,
        channel: &str,
        kind: &InKind,
        cont: &ProcessTerm,
        wrap: &Wrap,
        ctx: &Context,
        ids: &mut usize,
        out: &mut Vec<Transition>,
    ) -> Result<(), EngineError> {
        match kind {
            InKind::Classical(var) => {
                for &value in &self.env.classical_values {
                    let mut next = ctx.clone();
                    next.classical.insert(var.clone(), value);
                    out.push(Transition {
                        label: TransitionLabel::CRecv {
                            channel: channel.to_string(),
                            value,
                        },
                        next: Configuration::new(wrap(cont.clone()), next),
                        choice: fresh_choice(ids),
                    });
                }
            }
            InKind::Quantum(y) => {
                if self.env.reference_inputs {
                    for v in &ctx.register {
                        out.push(Transition {
                            label: TransitionLabel::QRecvRef {
                                channel: channel.to_string(),
                                qvar: v.clone(),
                            },
                            next: Configuration::new(wrap(cont.substitute(y, v)), ctx.clone()),
                            choice: fresh_choice(ids),
                        });
                    }
                }
                for sigma in &self.env.fresh_states {
                    let mut next = ctx.clone();
                    let v = next.declare_qubit(y, sigma)?;
                    out.push(Transition {
                        label: TransitionLabel::QRecvFresh {
                            channel: channel.to_string(),
                            qvar: v.clone(),
                            sigma: sigma.clone(),
                        },
                        next: Configuration::new(wrap(cont.substitute(y, &v)), next),
                        choice: fresh_choice(ids),
                    });
                }
            }
        }
        Ok(())
    }

    /// Picks one enabled transition according to `policy`.
    pub fn step<R: Rng>(
        &self,
        cfg: &Configuration,
        policy: SchedulerPolicy,
        rng: &mut R,
    ) -> Result<StepOutcome, EngineError> {
        if cfg.is_terminated() {
            return Ok(StepOutcome::Terminated);
        }
        let mut ts = self.enabled_transitions(cfg)?;
        if ts.is_empty() {
            return Ok(StepOutcome::Deadlocked);
        }
        let index = match policy {
            SchedulerPolicy::Deterministic | SchedulerPolicy::Exhaustive { .. } => 0,
            SchedulerPolicy::Random => pick_random(&ts, rng),
        };
        Ok(StepOutcome::Moved(ts.swap_remove(index)))
    }

    fn moves(&self, term: &ProcessTerm, ctx: &Context, ids: &mut usize) -> Result<Vec<Move>, EngineError> {
        match term {
            ProcessTerm::Nil | ProcessTerm::End => Ok(vec![]),
            ProcessTerm::Prefix(action, cont) => self.action_moves(action, cont, ctx, ids),
            ProcessTerm::Seq(a, b) => {
                if is_terminated(a) {
                    return Ok(vec![Move::Done {
                        label: TransitionLabel::Tau(TauCause::SeqEnd),
                        term: (**b).clone(),
                        ctx: None,
                        choice: fresh_choice(ids),
                    }]);
                }
                let b = (**b).clone();
                let f: Wrap = Rc::new(move |t| ProcessTerm::seq(t, b.clone()));
                Ok(self.moves(a, ctx, ids)?.into_iter().map(|m| m.wrapped(&f)).collect())
            }
            ProcessTerm::Restrict(body, chans) => {
                let chans = chans.clone();
                let inner = self.moves(body, ctx, ids)?;
                let keep: Vec<Move> = inner
                    .into_iter()
                    .filter(|m| m.channel().is_none_or(|c| !chans.contains(c)))
                    .collect();
                let f: Wrap = Rc::new(move |t| ProcessTerm::Restrict(Box::new(t), chans.clone()));
                Ok(keep.into_iter().map(|m| m.wrapped(&f)).collect())
            }
            ProcessTerm::DeclBlock(decls, body) => {
                let (body, next, names) = allocate(decls, body, ctx)?;
                Ok(vec![Move::Done {
                    label: TransitionLabel::Tau(TauCause::Declare { names }),
                    term: body,
                    ctx: Some(next),
                    choice: fresh_choice(ids),
                }])
            }
            ProcessTerm::Invoke(name, args) => Ok(vec![Move::Done {
                label: TransitionLabel::Tau(TauCause::Call { name: name.clone() }),
                term: self.unfold(name, args, ctx)?,
                ctx: None,
                choice: fresh_choice(ids),
            }]),
            ProcessTerm::Par(l, r) => self.par_moves(l, r, Rc::new(ProcessTerm::par), ctx, ids),
            ProcessTerm::ParShared(l, r, s) => {
                let s = s.clone();
                self.par_moves(l, r, Rc::new(move |a, b| ProcessTerm::par_shared(a, b, &s)), ctx, ids)
            }
        }
    }

    fn par_moves(
        &self,
        l: &ProcessTerm,
        r: &ProcessTerm,
        join: Rc<dyn Fn(ProcessTerm, ProcessTerm) -> ProcessTerm>,
        ctx: &Context,
        ids: &mut usize,
    ) -> Result<Vec<Move>, EngineError> {
        let lm = self.moves(l, ctx, ids)?;
        let rm = self.moves(r, ctx, ids)?;
        let mut syncs = vec![];
        for a in &lm {
            for b in &rm {
                if let Some((lt, rt, label, next)) = communicate(a, b, ctx) {
                    syncs.push(Move::Done {
                        label,
                        term: join(lt, rt),
                        ctx: next,
                        choice: fresh_choice(ids),
                    });
                }
                if let Some((rt, lt, label, next)) = communicate(b, a, ctx) {
                    syncs.push(Move::Done {
                        label,
                        term: join(lt, rt),
                        ctx: next,
                        choice: fresh_choice(ids),
                    });
                }
            }
        }
        let (r_own, j) = (r.clone(), join.clone());
        let left: Wrap = Rc::new(move |t| j(t, r_own.clone()));
        let (l_own, j) = (l.clone(), join);
        let right: Wrap = Rc::new(move |t| j(l_own.clone(), t));
        let mut out: Vec<Move> = lm.into_iter().map(|m| m.wrapped(&left)).collect();
        out.extend(rm.into_iter().map(|m| m.wrapped(&right)));
        out.extend(syncs);
        Ok(out)
    }

    fn unfold(&self, name: &str, args: &[Name], ctx: &Context) -> Result<ProcessTerm, EngineError> {
        let def = self
            .defs
            .get(name)
            .ok_or_else(|| EngineError::UnknownProcess(name.to_string()))?;
        if def.params.len() != args.len() {
            return Err(EngineError::Arity {
                name: name.to_string(),
                expected: def.params.len(),
                found: args.len(),
            });
        }
        for (p, a) in def.params.iter().zip(args) {
            ctx.expect_type(a, p.vtype, "CALL")?;
        }
        // simultaneous substitution through placeholders no program can name
        let mut body = def.body.clone();
        for (i, p) in def.params.iter().enumerate() {
            body = body.substitute(&p.name, &format!("#{i}"));
        }
        for (i, a) in args.iter().enumerate() {
            body = body.substitute(&format!("#{i}"), a);
        }
        Ok(body)
    }

    fn action_moves(
        &self,
        action: &Action,
        cont: &ProcessTerm,
        ctx: &Context,
        ids: &mut usize,
    ) -> Result<Vec<Move>, EngineError> {
        let identity: Wrap = Rc::new(|t| t);
        let moves = match action {
            Action::ClassicalSend(c, e) => vec![Move::Out {
                channel: c.clone(),
                payload: Payload::Classical(ctx.eval(e, "C-OUT")?),
                term: cont.clone(),
                choice: fresh_choice(ids),
            }],
            Action::QuantumSend(c, x) => {
                ctx.qubit_position(x, "Q-OUT")?;
                vec![Move::Out {
                    channel: c.clone(),
                    payload: Payload::Quantum(x.clone()),
                    term: cont.clone(),
                    choice: fresh_choice(ids),
                }]
            }
            Action::ClassicalRecv(c, v) => {
                ctx.expect_type(v, VarType::Integer, "C-IN")?;
                vec![Move::In {
                    channel: c.clone(),
                    kind: InKind::Classical(v.clone()),
                    cont: cont.clone(),
                    wrap: identity,
                    choice: fresh_choice(ids),
                }]
            }
            Action::QuantumRecv(c, y) => vec![Move::In {
                channel: c.clone(),
                kind: InKind::Quantum(y.clone()),
                cont: cont.clone(),
                wrap: identity,
                choice: fresh_choice(ids),
            }],
            Action::SendMeasure(c, m) => {
                let sends = m
                    .results
                    .iter()
                    .map(|r| Action::ClassicalSend(c.clone(), Expr::Var(r.clone())))
                    .collect();
                let desugared =
                    ProcessTerm::prefix(Action::Measure(m.clone()), ProcessTerm::actions(sends, cont.clone()));
                return self.moves(&desugared, ctx, ids);
            }
            Action::Unitary(g, args) => vec![unitary_move(g, args, cont, ctx, fresh_choice(ids))?],
            Action::Measure(m) => {
                if m.observable != COMPUTATIONAL_BASIS {
                    return Err(EngineError::IllFormed(format!(
                        "unsupported observable `{}`",
                        m.observable
                    )));
                }
                if m.qubits.len() != m.results.len() {
                    return Err(EngineError::IllFormed(format!(
                        "`{}` needs one result per qubit",
                        print_action(action)
                    )));
                }
                let targets = m
                    .qubits
                    .iter()
                    .map(|q| ctx.qubit_position(q, "M-APP"))
                    .collect::<Result<Vec<_>, _>>()?;
                for r in &m.results {
                    ctx.expect_type(r, VarType::Integer, "M-APP")?;
                }
                let branches = ctx
                    .state
                    .measurement_branches(&targets)
                    .map_err(|source| EngineError::Quantum { rule: "M-APP", source })?;
                let choice = fresh_choice(ids);
                branches
                    .into_iter()
                    .map(|b| {
                        let mut next = ctx.clone();
                        for (r, bit) in m.results.iter().zip(&b.outcome) {
                            next.classical.insert(r.clone(), u64::from(*bit));
                        }
                        next.state = b.post_state;
                        Move::Done {
                            label: TransitionLabel::Meas {
                                targets: m.qubits.clone(),
                                outcome: b.outcome,
                                probability: b.probability,
                            },
                            term: cont.clone(),
                            ctx: Some(next),
                            choice,
                        }
                    })
                    .collect()
            }
        };
        Ok(moves)
    }
}

/// `U[x⃗]`, optionally raised to a classical exponent.
fn unitary_move(
    gate: &str,
    args: &[Name],
    cont: &ProcessTerm,
    ctx: &Context,
    choice: usize,
) -> Result<Move, EngineError> {
    let split = args
        .iter()
        .take_while(|a| ctx.lookup(a) == Some(VarType::Integer))
        .count();
    let (exponents, qubits) = args.split_at(split);
    if exponents.len() > 1 {
        return Err(EngineError::IllFormed(format!("`{gate}` takes at most one exponent")));
    }
    let power = exponents
        .first()
        .map(|e| ctx.eval(&Expr::Var(e.clone()), "U-APP"))
        .transpose()?;
    let targets = qubits
        .iter()
        .map(|q| ctx.qubit_position(q, "U-APP"))
        .collect::<Result<Vec<_>, _>>()?;
    let g = Gate::from_name(gate, None).map_err(|source| EngineError::Quantum { rule: "U-APP", source })?;
    // every gate reachable from program text is an involution
    let applied = power.is_none_or(|k| k % 2 == 1);
    let mut next = ctx.clone();
    if applied {
        next.state = ctx
            .state
            .apply_unitary(&g.matrix(), &targets)
            .map_err(|source| EngineError::Quantum { rule: "U-APP", source })?;
    } else if targets.len() != g.arity() {
        return Err(EngineError::Quantum {
            rule: "U-APP",
            source: QuantumError::DimensionMismatch {
                expected: g.arity(),
                found: targets.len(),
            },
        });
    }
    Ok(Move::Done {
        label: TransitionLabel::Unit {
            gate: gate.to_string(),
            power,
            targets: qubits.to_vec(),
        },
        term: cont.clone(),
        ctx: if applied { Some(next) } else { None },
        choice,
    })
}

/// Synchronises an output of `sender` with an input of `receiver`.
/// Returns the sender's and receiver's residual terms.
fn communicate(
    sender: &Move,
    receiver: &Move,
    ctx: &Context,
) -> Option<(ProcessTerm, ProcessTerm, TransitionLabel, Option<Context>)> {
    let (
        Move::Out {
            channel, payload, term, ..
        },
        Move::In {
            channel: rc,
            kind,
            cont,
            wrap,
            ..
        },
    ) = (sender, receiver)
    else {
        return None;
    };
    if channel != rc {
        return None;
    }
    match (payload, kind) {
        (Payload::Classical(value), InKind::Classical(var)) => {
            let mut next = ctx.clone();
            next.classical.insert(var.clone(), *value);
            Some((
                term.clone(),
                wrap(cont.clone()),
                TransitionLabel::Tau(TauCause::ClassicalSync {
                    channel: channel.clone(),
                    value: *value,
                }),
                Some(next),
            ))
        }
        (Payload::Quantum(x), InKind::Quantum(y)) => Some((
            term.clone(),
            wrap(cont.substitute(y, x)),
            TransitionLabel::Tau(TauCause::QuantumSync {
                channel: channel.clone(),
                qvar: x.clone(),
            }),
            None,
        )),
        _ => None,
    }
}

/// Allocates a declaration block's variables, renaming any that clash with
/// existing bindings.
fn allocate(
    decls: &[VarDecl],
    body: &ProcessTerm,
    ctx: &Context,
) -> Result<(ProcessTerm, Context, Vec<Name>), EngineError> {
    let mut next = ctx.clone();
    next.scopes += 1;
    let mut body = body.clone();
    let mut names = vec![];
    for d in decls {
        let actual = match (&d.vtype, &d.init) {
            (VarType::Qubit, init) => {
                let lit = match init {
                    None => KetLiteral::Zero,
                    Some(Init::Ket(k)) => k.clone(),
                    Some(Init::Nat(_)) => {
                        return Err(EngineError::IllFormed(format!(
                            "qubit `{}` initialised with a number",
                            d.name
                        )));
                    }
                };
                let ket = lit.to_ket().ok_or_else(|| {
                    EngineError::IllFormed(format!("initial state of `{}` is not normalized", d.name))
                })?;
                next.declare_qubit(&d.name, &DensityOperator::from_ket(&ket))?
            }
            (VarType::Integer, init) => {
                let value = match init {
                    None => 0,
                    // initialisers see the enclosing scope only
                    Some(Init::Nat(e)) => ctx.eval(e, "DECL")?,
                    Some(Init::Ket(_)) => {
                        return Err(EngineError::IllFormed(format!(
                            "integer `{}` initialised with a ket",
                            d.name
                        )));
                    }
                };
                next.declare_integer(&d.name, value)
            }
        };
        if actual != d.name {
            body = body.substitute(&d.name, &actual);
        }
        names.push(actual);
    }
    Ok((body, next, names))
}

fn pick_random<R: Rng>(ts: &[Transition], rng: &mut R) -> usize {
    let choices = ts.iter().map(|t| t.choice).max().map_or(0, |m| m + 1);
    let choice = rng.gen_range(0..choices);
    let group: Vec<usize> = (0..ts.len()).filter(|&i| ts[i].choice == choice).collect();
    if group.len() == 1 {
        return group[0];
    }
    let weight = |i: usize| match &ts[i].label {
        TransitionLabel::Meas { probability, .. } => *probability,
        _ => 1.0,
    };
    let total: f64 = group.iter().map(|&i| weight(i)).sum();
    let mut draw = rng.gen::<f64>() * total;
    for &i in &group {
        draw -= weight(i);
        if draw < 0.0 {
            return i;
        }
    }
    *group.last().expect("group is non-empty")
}

/// Whether two density operators agree entrywise within the tolerance.
pub fn states_close(a: &DensityOperator, b: &DensityOperator) -> bool {
    a.nqubits() == b.nqubits() && a.matrix().approx_eq(b.matrix(), TOLERANCE)
}
