//! Abstract syntax of eQPAlg processes, declarations and specifications.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::quantum::{Complex64, Gate, Ket, TOLERANCE};

pub type Name = String;

/// Natural-number expressions sent over classical channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Nat(u64),
    Var(Name),
    Add(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Nat(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Add(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    fn rename(&self, from: &str, to: &str) -> Expr {
        match self {
            Expr::Var(v) if v == from => Expr::Var(to.to_string()),
            Expr::Add(a, b) => Expr::Add(Box::new(a.rename(from, to)), Box::new(b.rename(from, to))),
            other => other.clone(),
        }
    }
}

/// Observable of a measurement. Only the computational basis is supported.
pub const COMPUTATIONAL_BASIS: &str = "std";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Measure {
    pub observable: Name,
    pub qubits: Vec<Name>,
    /// One classical result variable per measured qubit, bound left to right.
    pub results: Vec<Name>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    ClassicalSend(Name, Expr),
    /// Stores the received natural number in a declared integer variable.
    ClassicalRecv(Name, Name),
    QuantumSend(Name, Name),
    /// Binds the variable in the continuation to the received qubit.
    QuantumRecv(Name, Name),
    /// `c!measure[...]`: measure, then send each result on the channel.
    SendMeasure(Name, Measure),
    /// Gate application. Integer-typed arguments, which must come first,
    /// give the number of times the gate is applied.
    Unitary(Name, Vec<Name>),
    Measure(Measure),
}

/// Value of a ket literal. Literal kinds are kept apart so that printing
/// reproduces the source form.
#[derive(Debug, Clone, PartialEq)]
pub enum KetLiteral {
    Zero,
    One,
    Plus,
    Minus,
    Pair(Complex64, Complex64),
}

impl KetLiteral {
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = Complex64::new;
        match self {
            KetLiteral::Zero => (c(1.0, 0.0), c(0.0, 0.0)),
            KetLiteral::One => (c(0.0, 0.0), c(1.0, 0.0)),
            KetLiteral::Plus => (c(h, 0.0), c(h, 0.0)),
            KetLiteral::Minus => (c(h, 0.0), c(-h, 0.0)),
            KetLiteral::Pair(a, b) => (*a, *b),
        }
    }

    pub fn is_normalized(&self) -> bool {
        let (a, b) = self.amplitudes();
        (a.norm_sqr() + b.norm_sqr() - 1.0).abs() <= TOLERANCE
            && a.re.is_finite()
            && a.im.is_finite()
            && b.re.is_finite()
            && b.im.is_finite()
    }

    pub fn to_ket(&self) -> Option<Ket> {
        let (a, b) = self.amplitudes();
        Ket::qubit(a, b).ok()
    }

    pub fn from_ket(ket: &Ket) -> KetLiteral {
        let a = ket.amplitudes();
        KetLiteral::Pair(a[0], a[1])
    }
}

// Literals are compared bitwise so that terms can be hashed.
impl Eq for KetLiteral {}

impl std::hash::Hash for KetLiteral {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        if let KetLiteral::Pair(a, b) = self {
            for x in [a.re, a.im, b.re, b.im] {
                x.to_bits().hash(state);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarType {
    Qubit,
    Integer,
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarType::Qubit => "Qubit",
            VarType::Integer => "Integer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Init {
    Ket(KetLiteral),
    Nat(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarDecl {
    pub name: Name,
    pub vtype: VarType,
    pub init: Option<Init>,
}

impl VarDecl {
    pub fn qubit(name: &str, init: Option<KetLiteral>) -> VarDecl {
        VarDecl {
            name: name.to_string(),
            vtype: VarType::Qubit,
            init: init.map(Init::Ket),
        }
    }

    pub fn integer(name: &str, init: Option<Expr>) -> VarDecl {
        VarDecl {
            name: name.to_string(),
            vtype: VarType::Integer,
            init: init.map(Init::Nat),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ProcessTerm {
    /// Deadlock.
    Nil,
    /// Successful termination.
    End,
    Prefix(Action, Box<ProcessTerm>),
    Seq(Box<ProcessTerm>, Box<ProcessTerm>),
    Restrict(Box<ProcessTerm>, BTreeSet<Name>),
    DeclBlock(Vec<VarDecl>, Box<ProcessTerm>),
    Invoke(Name, Vec<Name>),
    Par(Box<ProcessTerm>, Box<ProcessTerm>),
    /// Parallel composition over a shared entangled state; the name is
    /// metadata only.
    ParShared(Box<ProcessTerm>, Box<ProcessTerm>, Name),
}

impl ProcessTerm {
    pub fn prefix(action: Action, cont: ProcessTerm) -> ProcessTerm {
        ProcessTerm::Prefix(action, Box::new(cont))
    }

    pub fn seq(a: ProcessTerm, b: ProcessTerm) -> ProcessTerm {
        ProcessTerm::Seq(Box::new(a), Box::new(b))
    }

    pub fn par(a: ProcessTerm, b: ProcessTerm) -> ProcessTerm {
        ProcessTerm::Par(Box::new(a), Box::new(b))
    }

    pub fn par_shared(a: ProcessTerm, b: ProcessTerm, state: &str) -> ProcessTerm {
        ProcessTerm::ParShared(Box::new(a), Box::new(b), state.to_string())
    }

    pub fn restrict<I: IntoIterator<Item = S>, S: Into<Name>>(body: ProcessTerm, channels: I) -> ProcessTerm {
        ProcessTerm::Restrict(Box::new(body), channels.into_iter().map(Into::into).collect())
    }

    pub fn block(decls: Vec<VarDecl>, body: ProcessTerm) -> ProcessTerm {
        ProcessTerm::DeclBlock(decls, Box::new(body))
    }

    /// Builds `a₁.a₂.….cont`.
    pub fn actions(actions: Vec<Action>, cont: ProcessTerm) -> ProcessTerm {
        actions
            .into_iter()
            .rev()
            .fold(cont, |acc, a| ProcessTerm::prefix(a, acc))
    }

    /// Free variables: quantum receives and declarations bind.
    pub fn free_variables(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Name>) {
        match self {
            ProcessTerm::Nil | ProcessTerm::End => {}
            ProcessTerm::Prefix(action, cont) => {
                let mut inner = BTreeSet::new();
                cont.collect_free(&mut inner);
                if let Action::QuantumRecv(_, v) = action {
                    inner.remove(v);
                }
                out.extend(inner);
                out.extend(action.occurrences());
            }
            ProcessTerm::Seq(a, b) | ProcessTerm::Par(a, b) | ProcessTerm::ParShared(a, b, _) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            ProcessTerm::Restrict(body, _) => body.collect_free(out),
            ProcessTerm::DeclBlock(decls, body) => {
                let mut inner = BTreeSet::new();
                body.collect_free(&mut inner);
                for d in decls {
                    inner.remove(&d.name);
                }
                out.extend(inner);
                for d in decls {
                    if let Some(Init::Nat(e)) = &d.init {
                        e.vars(out);
                    }
                }
            }
            ProcessTerm::Invoke(_, args) => out.extend(args.iter().cloned()),
        }
    }

    /// Every variable name appearing anywhere, bound or free.
    pub fn all_variables(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_all(&mut out);
        out
    }

    fn collect_all(&self, out: &mut BTreeSet<Name>) {
        match self {
            ProcessTerm::Nil | ProcessTerm::End => {}
            ProcessTerm::Prefix(action, cont) => {
                out.extend(action.occurrences());
                if let Action::QuantumRecv(_, v) = action {
                    out.insert(v.clone());
                }
                cont.collect_all(out);
            }
            ProcessTerm::Seq(a, b) | ProcessTerm::Par(a, b) | ProcessTerm::ParShared(a, b, _) => {
                a.collect_all(out);
                b.collect_all(out);
            }
            ProcessTerm::Restrict(body, _) => body.collect_all(out),
            ProcessTerm::DeclBlock(decls, body) => {
                for d in decls {
                    out.insert(d.name.clone());
                    if let Some(Init::Nat(e)) = &d.init {
                        e.vars(out);
                    }
                }
                body.collect_all(out);
            }
            ProcessTerm::Invoke(_, args) => out.extend(args.iter().cloned()),
        }
    }

    /// Capture-avoiding substitution `term{to/from}`.
    pub fn substitute(&self, from: &str, to: &str) -> ProcessTerm {
        if from == to {
            return self.clone();
        }
        match self {
            ProcessTerm::Nil | ProcessTerm::End => self.clone(),
            ProcessTerm::Prefix(action, cont) => {
                if let Action::QuantumRecv(ch, bound) = action {
                    if bound == from {
                        return self.clone();
                    }
                    if bound == to && cont.free_variables().contains(from) {
                        let fresh = fresh_name(bound, &[&**cont], &[from, to]);
                        let cont = cont.substitute(bound, &fresh).substitute(from, to);
                        return ProcessTerm::prefix(Action::QuantumRecv(ch.clone(), fresh), cont);
                    }
                }
                ProcessTerm::prefix(action.rename(from, to), cont.substitute(from, to))
            }
            ProcessTerm::Seq(a, b) => ProcessTerm::seq(a.substitute(from, to), b.substitute(from, to)),
            ProcessTerm::Par(a, b) => ProcessTerm::par(a.substitute(from, to), b.substitute(from, to)),
            ProcessTerm::ParShared(a, b, s) => {
                ProcessTerm::par_shared(a.substitute(from, to), b.substitute(from, to), s)
            }
            ProcessTerm::Restrict(body, chans) => {
                ProcessTerm::Restrict(Box::new(body.substitute(from, to)), chans.clone())
            }
            ProcessTerm::Invoke(name, args) => ProcessTerm::Invoke(
                name.clone(),
                args.iter()
                    .map(|a| if a == from { to.to_string() } else { a.clone() })
                    .collect(),
            ),
            ProcessTerm::DeclBlock(decls, body) => {
                // initialisers are evaluated outside the block's scope
                let mut decls: Vec<VarDecl> = decls
                    .iter()
                    .map(|d| VarDecl {
                        init: match &d.init {
                            Some(Init::Nat(e)) => Some(Init::Nat(e.rename(from, to))),
                            other => other.clone(),
                        },
                        ..d.clone()
                    })
                    .collect();
                if decls.iter().any(|d| d.name == from) {
                    return ProcessTerm::DeclBlock(decls, body.clone());
                }
                let mut body = (**body).clone();
                if decls.iter().any(|d| d.name == to) && body.free_variables().contains(from) {
                    let names: Vec<&str> = decls.iter().map(|d| d.name.as_str()).collect();
                    let mut avoid: Vec<&str> = vec![from, to];
                    avoid.extend(names.iter().copied());
                    let fresh = fresh_name(to, &[&body], &avoid);
                    body = body.substitute(to, &fresh);
                    for d in decls.iter_mut() {
                        if d.name == to {
                            d.name = fresh.clone();
                        }
                    }
                }
                ProcessTerm::DeclBlock(decls, Box::new(body.substitute(from, to)))
            }
        }
    }

    /// Nesting depth of the term tree.
    pub fn depth(&self) -> usize {
        match self {
            ProcessTerm::Nil | ProcessTerm::End | ProcessTerm::Invoke(..) => 1,
            ProcessTerm::Prefix(_, c) | ProcessTerm::Restrict(c, _) | ProcessTerm::DeclBlock(_, c) => 1 + c.depth(),
            ProcessTerm::Seq(a, b) | ProcessTerm::Par(a, b) | ProcessTerm::ParShared(a, b, _) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

impl Action {
    /// Variable occurrences that are not binders.
    pub fn occurrences(&self) -> Vec<Name> {
        match self {
            Action::ClassicalSend(_, e) => {
                let mut s = BTreeSet::new();
                e.vars(&mut s);
                s.into_iter().collect()
            }
            Action::ClassicalRecv(_, v) | Action::QuantumSend(_, v) => vec![v.clone()],
            Action::QuantumRecv(..) => vec![],
            Action::SendMeasure(_, m) | Action::Measure(m) => m.qubits.iter().chain(&m.results).cloned().collect(),
            Action::Unitary(_, args) => args.clone(),
        }
    }

    pub fn channel(&self) -> Option<&str> {
        match self {
            Action::ClassicalSend(c, _)
            | Action::ClassicalRecv(c, _)
            | Action::QuantumSend(c, _)
            | Action::QuantumRecv(c, _)
            | Action::SendMeasure(c, _) => Some(c),
            _ => None,
        }
    }

    fn rename(&self, from: &str, to: &str) -> Action {
        let r = |v: &Name| if v == from { to.to_string() } else { v.clone() };
        let rm = |m: &Measure| Measure {
            observable: m.observable.clone(),
            qubits: m.qubits.iter().map(r).collect(),
            results: m.results.iter().map(r).collect(),
        };
        match self {
            Action::ClassicalSend(c, e) => Action::ClassicalSend(c.clone(), e.rename(from, to)),
            Action::ClassicalRecv(c, v) => Action::ClassicalRecv(c.clone(), r(v)),
            Action::QuantumSend(c, v) => Action::QuantumSend(c.clone(), r(v)),
            Action::QuantumRecv(c, v) => Action::QuantumRecv(c.clone(), v.clone()),
            Action::SendMeasure(c, m) => Action::SendMeasure(c.clone(), rm(m)),
            Action::Unitary(g, args) => Action::Unitary(g.clone(), args.iter().map(r).collect()),
            Action::Measure(m) => Action::Measure(rm(m)),
        }
    }
}

/// Returns `base'`, `base''`, … not occurring in `terms` or `avoid`.
pub fn fresh_name(base: &str, terms: &[&ProcessTerm], avoid: &[&str]) -> Name {
    let mut used = BTreeSet::new();
    for t in terms {
        used.extend(t.all_variables());
    }
    let mut candidate = format!("{base}'");
    while used.contains(&candidate) || avoid.contains(&candidate.as_str()) {
        candidate.push('\'');
    }
    candidate
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcDef {
    pub name: Name,
    pub params: Vec<VarDecl>,
    pub body: ProcessTerm,
}

/// Connectives allowed in a specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpecOp {
    And,
    Or,
    Implies,
    Plus,
    Geq,
    Assign,
    Equiv,
}

impl SpecOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            SpecOp::And => "/\\",
            SpecOp::Or => "\\/",
            SpecOp::Implies => "=>",
            SpecOp::Plus => "+",
            SpecOp::Geq => ">=",
            SpecOp::Assign => ":=",
            SpecOp::Equiv => "==",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resource {
    Ebit,
    Cbit,
    Qubit,
}

impl Resource {
    pub fn unit(&self, count: u64) -> &'static str {
        match (self, count == 1) {
            (Resource::Ebit, true) => "ebit",
            (Resource::Ebit, false) => "ebits",
            (Resource::Cbit, true) => "cbit",
            (Resource::Cbit, false) => "cbits",
            (Resource::Qubit, true) => "qubit",
            (Resource::Qubit, false) => "qubits",
        }
    }
}

/// `n ebit + m cbits >= k qubit` and similar resource relations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Equation {
    pub lhs: Vec<(u64, Resource)>,
    pub relation: SpecOp,
    pub rhs: Vec<(u64, Resource)>,
}

impl Equation {
    pub fn lhs_amount(&self, r: Resource) -> u64 {
        self.lhs.iter().filter(|(_, x)| *x == r).map(|(n, _)| n).sum()
    }

    pub fn rhs_amount(&self, r: Resource) -> u64 {
        self.rhs.iter().filter(|(_, x)| *x == r).map(|(n, _)| n).sum()
    }
}

/// Variables owned by one party of the protocol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarGroup {
    pub party: Name,
    pub vars: Vec<Name>,
}

/// A specification `(Var, Op, Eq, State)`. Clauses are joined by `ops`,
/// which holds one connective between each pair of consecutive clauses.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpecStatement {
    pub name: Name,
    pub vars: Vec<VarGroup>,
    pub states: Vec<Name>,
    pub equations: Vec<Equation>,
    pub clauses: Vec<SpecClause>,
    pub ops: Vec<SpecOp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecClause {
    Vars(usize),
    State(usize),
    Equation(usize),
}

impl SpecStatement {
    pub fn all_vars(&self) -> BTreeSet<Name> {
        self.vars.iter().flat_map(|g| g.vars.iter().cloned()).collect()
    }
}

/// A parsed `.eqp` file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceFile {
    pub defs: Vec<ProcDef>,
    pub spec: Option<SpecStatement>,
    pub main: Option<Name>,
}

impl SourceFile {
    pub fn def(&self, name: &str) -> Option<&ProcDef> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn def_map(&self) -> BTreeMap<Name, ProcDef> {
        self.defs.iter().map(|d| (d.name.clone(), d.clone())).collect()
    }
}

/// One problem found by [`well_formed`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Definition name followed by the offending construct.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a single term. Free variables of unknown type are accepted.
pub fn well_formed(term: &ProcessTerm, defs: &BTreeMap<Name, ProcDef>) -> Report {
    let mut checker = Checker {
        defs,
        report: Report::default(),
        location: "<term>".to_string(),
        strict_scope: false,
    };
    checker.term(term, &mut Vec::new());
    checker.report
}

/// Checks a whole file: distinct definitions, `main`, scoping of every body.
pub fn well_formed_file(file: &SourceFile) -> Report {
    let defs = file.def_map();
    let mut report = Report::default();
    let mut seen = BTreeSet::new();
    for d in &file.defs {
        if !seen.insert(d.name.as_str()) {
            report.violations.push(Violation {
                location: d.name.clone(),
                message: "process defined more than once".into(),
            });
        }
    }
    if let Some(main) = &file.main {
        match defs.get(main) {
            None => report.violations.push(Violation {
                location: "main".into(),
                message: format!("`{main}` is not a defined process"),
            }),
            Some(d) if !d.params.is_empty() => report.violations.push(Violation {
                location: "main".into(),
                message: format!("`{main}` takes parameters"),
            }),
            Some(_) => {}
        }
    }
    for d in &file.defs {
        let mut checker = Checker {
            defs: &defs,
            report: Report::default(),
            location: d.name.clone(),
            strict_scope: true,
        };
        let mut scope = Vec::new();
        checker.decls(&d.params, &mut scope, true);
        checker.term(&d.body, &mut scope);
        report.violations.extend(checker.report.violations);
    }
    if let Some(spec) = &file.spec {
        let mut seen = BTreeSet::new();
        for g in &spec.vars {
            for v in &g.vars {
                if !seen.insert(v) {
                    report.violations.push(Violation {
                        location: format!("spec {}", spec.name),
                        message: format!("variable `{v}` listed in more than one group"),
                    });
                }
            }
        }
    }
    report
}

struct Checker<'a> {
    defs: &'a BTreeMap<Name, ProcDef>,
    report: Report,
    location: String,
    strict_scope: bool,
}

type Scope = Vec<(Name, VarType)>;

impl Checker<'_> {
    fn violation(&mut self, what: impl fmt::Display, message: impl Into<String>) {
        self.report.violations.push(Violation {
            location: format!("{} > {}", self.location, what),
            message: message.into(),
        });
    }

    fn lookup(scope: &Scope, name: &str) -> Option<VarType> {
        scope.iter().rev().find(|(n, _)| n == name).map(|(_, t)| *t)
    }

    fn expect(&mut self, scope: &Scope, name: &str, want: VarType, what: &dyn fmt::Display) {
        match Self::lookup(scope, name) {
            Some(t) if t == want => {}
            Some(t) => self.violation(what, format!("`{name}` is {t}, expected {want}")),
            None if self.strict_scope => self.violation(what, format!("unbound variable `{name}`")),
            None => {}
        }
    }

    fn decls(&mut self, decls: &[VarDecl], scope: &mut Scope, params: bool) {
        let mut seen = BTreeSet::new();
        for d in decls {
            let what = format!("declaration of `{}`", d.name);
            if !seen.insert(d.name.as_str()) {
                self.violation(&what, "declared twice in the same block");
            }
            match (&d.init, d.vtype) {
                (Some(_), _) if params => self.violation(&what, "parameters cannot be initialised"),
                (Some(Init::Ket(k)), VarType::Qubit) => {
                    if !k.is_normalized() {
                        self.violation(&what, "ket literal is not normalized");
                    }
                }
                (Some(Init::Nat(e)), VarType::Integer) => {
                    let mut vars = BTreeSet::new();
                    e.vars(&mut vars);
                    for v in vars {
                        self.expect(scope, &v, VarType::Integer, &what);
                    }
                }
                (Some(_), t) => self.violation(&what, format!("initialiser does not match type {t}")),
                (None, _) => {}
            }
        }
        scope.extend(decls.iter().map(|d| (d.name.clone(), d.vtype)));
    }

    fn term(&mut self, term: &ProcessTerm, scope: &mut Scope) {
        match term {
            ProcessTerm::Nil | ProcessTerm::End => {}
            ProcessTerm::Prefix(action, cont) => {
                self.action(action, scope);
                if let Action::QuantumRecv(_, v) = action {
                    scope.push((v.clone(), VarType::Qubit));
                    self.term(cont, scope);
                    scope.pop();
                } else {
                    self.term(cont, scope);
                }
            }
            ProcessTerm::Seq(a, b) | ProcessTerm::Par(a, b) | ProcessTerm::ParShared(a, b, _) => {
                self.term(a, scope);
                self.term(b, scope);
            }
            ProcessTerm::Restrict(body, chans) => {
                if chans.is_empty() {
                    self.violation("restriction", "empty channel set");
                }
                self.term(body, scope);
            }
            ProcessTerm::DeclBlock(decls, body) => {
                let mark = scope.len();
                self.decls(decls, scope, false);
                self.term(body, scope);
                scope.truncate(mark);
            }
            ProcessTerm::Invoke(name, args) => {
                let what = format!("{name}[{}]", args.join(","));
                let Some(def) = self.defs.get(name) else {
                    self.violation(&what, format!("undefined process `{name}`"));
                    return;
                };
                if def.params.len() != args.len() {
                    self.violation(
                        &what,
                        format!(
                            "arity mismatch: `{name}` takes {} arguments, given {}",
                            def.params.len(),
                            args.len()
                        ),
                    );
                    return;
                }
                let params: Vec<VarType> = def.params.iter().map(|p| p.vtype).collect();
                for (arg, t) in args.iter().zip(params) {
                    self.expect(scope, arg, t, &what);
                }
                let mut distinct = BTreeSet::new();
                for a in args {
                    if !distinct.insert(a) {
                        self.violation(&what, format!("`{a}` passed twice"));
                    }
                }
            }
        }
    }

    fn measure(&mut self, m: &Measure, scope: &Scope, what: &dyn fmt::Display) {
        if m.observable != COMPUTATIONAL_BASIS {
            self.violation(what, format!("unsupported observable `{}`", m.observable));
        }
        if m.qubits.is_empty() {
            self.violation(what, "nothing to measure");
        }
        if m.qubits.len() != m.results.len() {
            self.violation(
                what,
                format!(
                    "arity violation: {} qubits measured into {} result variables",
                    m.qubits.len(),
                    m.results.len()
                ),
            );
        }
        for (i, q) in m.qubits.iter().enumerate() {
            if m.qubits[..i].contains(q) {
                self.violation(what, format!("`{q}` measured twice"));
            }
            self.expect(scope, q, VarType::Qubit, what);
        }
        for r in &m.results {
            self.expect(scope, r, VarType::Integer, what);
        }
    }

    fn action(&mut self, action: &Action, scope: &Scope) {
        let what = ActionDisplay(action);
        match action {
            Action::ClassicalSend(_, e) => {
                let mut vars = BTreeSet::new();
                e.vars(&mut vars);
                for v in vars {
                    self.expect(scope, &v, VarType::Integer, &what);
                }
            }
            Action::ClassicalRecv(_, v) => self.expect(scope, v, VarType::Integer, &what),
            Action::QuantumSend(_, v) => self.expect(scope, v, VarType::Qubit, &what),
            Action::QuantumRecv(..) => {}
            Action::SendMeasure(_, m) | Action::Measure(m) => self.measure(m, scope, &what),
            Action::Unitary(name, args) => {
                let gate = match Gate::from_name(name, None) {
                    Ok(g) => g,
                    Err(_) => {
                        self.violation(&what, format!("unknown unitary `{name}`"));
                        return;
                    }
                };
                let split = args
                    .iter()
                    .take_while(|a| Self::lookup(scope, a) == Some(VarType::Integer))
                    .count();
                if split > 1 {
                    self.violation(&what, "at most one classical exponent allowed");
                }
                let qubits = &args[split..];
                if qubits.len() != gate.arity() {
                    self.violation(
                        &what,
                        format!("`{name}` acts on {} qubits, given {}", gate.arity(), qubits.len()),
                    );
                }
                for (i, q) in qubits.iter().enumerate() {
                    if qubits[..i].contains(q) {
                        self.violation(&what, format!("`{q}` used twice"));
                    }
                    self.expect(scope, q, VarType::Qubit, &what);
                }
            }
        }
    }
}

struct ActionDisplay<'a>(&'a Action);

impl fmt::Display for ActionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::print_action(self.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(g: &str, args: &[&str]) -> Action {
        Action::Unitary(g.into(), args.iter().map(|s| s.to_string()).collect())
    }

    fn tail() -> ProcessTerm {
        ProcessTerm::prefix(Action::QuantumSend("h".into(), "y".into()), ProcessTerm::End)
    }

    #[test]
    fn substitute_renames_free_occurrences() {
        let t = ProcessTerm::prefix(unit("H", &["y"]), tail());
        let expect = ProcessTerm::prefix(unit("H", &["x"]), tail().substitute("y", "x"));
        assert_eq!(t.substitute("y", "x"), expect);
        assert_eq!(ProcessTerm::Nil.substitute("y", "x"), ProcessTerm::Nil);
    }

    #[test]
    fn substitute_stops_at_binders() {
        let t = ProcessTerm::block(
            vec![VarDecl::qubit("y", None)],
            ProcessTerm::prefix(Action::QuantumSend("g".into(), "y".into()), ProcessTerm::Nil),
        );
        assert_eq!(t.substitute("y", "x"), t);
        let r = ProcessTerm::prefix(Action::QuantumRecv("g".into(), "y".into()), tail());
        assert_eq!(r.substitute("y", "x"), r);
    }

    #[test]
    fn substitute_avoids_capture() {
        // g?x . CNOT[x,y] . nil   {x/y}   must not capture
        let t = ProcessTerm::prefix(
            Action::QuantumRecv("g".into(), "x".into()),
            ProcessTerm::prefix(unit("CNOT", &["x", "y"]), ProcessTerm::Nil),
        );
        let s = t.substitute("y", "x");
        let ProcessTerm::Prefix(Action::QuantumRecv(_, bound), cont) = &s else {
            panic!()
        };
        assert_ne!(bound, "x");
        assert_eq!(
            **cont,
            ProcessTerm::prefix(unit("CNOT", &[bound, "x"]), ProcessTerm::Nil)
        );
        assert_eq!(s.free_variables(), ["x".to_string()].into());
    }

    #[test]
    fn free_variable_examples() {
        let recv = ProcessTerm::prefix(
            Action::QuantumRecv("g".into(), "x".into()),
            ProcessTerm::prefix(unit("H", &["x"]), ProcessTerm::Nil),
        );
        assert!(recv.free_variables().is_empty());
        let send = ProcessTerm::prefix(Action::QuantumSend("g".into(), "x".into()), ProcessTerm::Nil);
        assert_eq!(send.free_variables(), ["x".to_string()].into());
        let cnot = ProcessTerm::prefix(unit("CNOT", &["x", "z"]), ProcessTerm::Nil);
        assert_eq!(cnot.free_variables(), ["x".to_string(), "z".to_string()].into());
    }

    #[test]
    fn measure_arity_violation() {
        let t = ProcessTerm::prefix(
            Action::Measure(Measure {
                observable: COMPUTATIONAL_BASIS.into(),
                qubits: vec!["x".into(), "y".into()],
                results: vec!["p".into()],
            }),
            ProcessTerm::End,
        );
        let r = well_formed(&t, &BTreeMap::new());
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].message.contains("arity"));
    }

    #[test]
    fn invoke_arity_violation() {
        let mut defs = BTreeMap::new();
        defs.insert(
            "BuildEPR".to_string(),
            ProcDef {
                name: "BuildEPR".into(),
                params: vec![VarDecl::qubit("a", None), VarDecl::qubit("b", None)],
                body: ProcessTerm::End,
            },
        );
        let r = well_formed(&ProcessTerm::Invoke("BuildEPR".into(), vec!["a".into()]), &defs);
        assert!(r.violations[0].message.contains("arity"));
    }

    #[test]
    fn type_confusion_reported() {
        let t = ProcessTerm::block(
            vec![VarDecl::integer("n", None), VarDecl::qubit("x", None)],
            ProcessTerm::actions(
                vec![unit("H", &["n"]), Action::ClassicalRecv("c".into(), "x".into())],
                ProcessTerm::End,
            ),
        );
        let r = well_formed(&t, &BTreeMap::new());
        assert_eq!(r.violations.len(), 2, "{:?}", r);
    }

    #[test]
    fn duplicate_declarations_reported() {
        let t = ProcessTerm::block(
            vec![VarDecl::qubit("x", None), VarDecl::integer("x", None)],
            ProcessTerm::End,
        );
        assert!(!well_formed(&t, &BTreeMap::new()).is_ok());
    }

    #[test]
    fn classical_exponent_gate_is_well_formed() {
        let t = ProcessTerm::block(
            vec![VarDecl::integer("s", None), VarDecl::qubit("z", None)],
            ProcessTerm::prefix(unit("X", &["s", "z"]), ProcessTerm::End),
        );
        assert!(well_formed(&t, &BTreeMap::new()).is_ok());
    }
}
