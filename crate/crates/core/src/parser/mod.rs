//! Concrete `.eqp` syntax.
//!
//! ```text
//! file      := { procdef } [ "spec" NAME ":=" clause { conn clause } ] [ "main" NAME ]
//! procdef   := NAME [ "(" decls ")" ] ":=" process
//! process   := seqp { ("||" | "||_" NAME) seqp }
//! seqp      := unary { ";" unary }
//! unary     := primary { "\" "{" namelist "}" }
//! primary   := "nil" | "end" | action "." unary | "[" decls "." process "]"
//!            | NAME [ "[" namelist "]" ] | "(" process ")"
//! action    := NAME "!" expr | NAME "!" measure | NAME "?" NAME
//!            | NAME "[" namelist "]" | measure
//! measure   := "measure" "[" "{" namelist "}" "->" namelist "]"
//! decls     := decl { "," decl }
//! decl      := NAME ":" ("Qubit" | "Integer") [ "=" init ]
//! ```
//!
//! `g?y` is a classical receive when `y` is an integer variable in scope and
//! a binding quantum receive otherwise; `g!x` is a quantum send when `x` is
//! a qubit in scope. Comments run from `--` to the end of the line.

mod lexer;
mod printer;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::ast::*;
use crate::quantum::Complex64;
use lexer::{tokenize, Tok, Token};

pub use printer::{pretty_print, print_action, print_term};

/// Deepest nesting of terms the parser accepts.
pub const MAX_NESTING: usize = 100;

/// Longest run of consecutive action prefixes the parser accepts.
pub const MAX_CHAIN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(" or "))?;
        }
        Ok(())
    }
}

/// Parses a file and checks it with [`well_formed_file`].
pub fn parse(source: &str) -> Result<SourceFile, ParseError> {
    let (file, positions) = parse_syntax(source)?;
    let report = well_formed_file(&file);
    if let Some(v) = report.violations.first() {
        let head = v.location.split(" > ").next().unwrap_or_default();
        let (line, column) = positions
            .iter()
            .find(|(name, _)| name == head)
            .map(|(_, p)| *p)
            .unwrap_or((1, 1));
        return Err(ParseError {
            line,
            column,
            message: v.to_string(),
            expected: vec![],
        });
    }
    Ok(file)
}

/// Parses without the well-formedness check.
pub fn parse_unchecked(source: &str) -> Result<SourceFile, ParseError> {
    parse_syntax(source).map(|(f, _)| f)
}

/// Parses a single process term against an initial typing scope.
pub fn parse_term(source: &str, scope: &[(Name, VarType)]) -> Result<ProcessTerm, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        scope: scope.to_vec(),
        depth: 0,
    };
    let t = p.process()?;
    p.expect(Tok::Eof)?;
    Ok(t)
}

type Positions = Vec<(Name, (usize, usize))>;

fn parse_syntax(source: &str) -> Result<(SourceFile, Positions), ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        scope: Vec::new(),
        depth: 0,
    };
    p.file()
}

const KEYWORDS: &[&str] = &["nil", "end", "measure", "spec", "main", "var"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    scope: Vec<(Name, VarType)>,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.column)
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(ParseError {
            line,
            column,
            message: format!("unexpected {}", self.peek().describe()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn fail_msg<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(ParseError {
            line,
            column,
            message: message.into(),
            expected: vec![],
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            self.fail(&[&tok.describe()])
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn name(&mut self) -> Result<Name, ParseError> {
        match self.peek() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                let n = n.clone();
                self.advance();
                Ok(n)
            }
            _ => self.fail(&["a name"]),
        }
    }

    fn name_list(&mut self, close: Tok) -> Result<Vec<Name>, ParseError> {
        let mut out = Vec::new();
        if *self.peek() == close {
            return Ok(out);
        }
        out.push(self.name()?);
        while *self.peek() == Tok::Comma {
            self.advance();
            out.push(self.name()?);
        }
        Ok(out)
    }

    fn lookup(&self, name: &str) -> Option<VarType> {
        self.scope.iter().rev().find(|(n, _)| n == name).map(|(_, t)| *t)
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.fail_msg(format!("nesting deeper than {MAX_NESTING} levels"));
        }
        Ok(())
    }

    fn file(&mut self) -> Result<(SourceFile, Positions), ParseError> {
        let mut file = SourceFile::default();
        let mut positions = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Name(n) if n == "spec" || n == "main" => break,
                Tok::Name(_) => {
                    let pos = self.here();
                    let def = self.procdef()?;
                    positions.push((def.name.clone(), pos));
                    file.defs.push(def);
                }
                _ => return self.fail(&["a process definition", "`spec`", "`main`"]),
            }
        }
        if self.is_keyword("spec") {
            let pos = self.here();
            self.advance();
            let spec = self.spec()?;
            positions.push((format!("spec {}", spec.name), pos));
            file.spec = Some(spec);
        }
        if self.is_keyword("main") {
            positions.push(("main".into(), self.here()));
            self.advance();
            file.main = Some(self.name()?);
        }
        if *self.peek() != Tok::Eof {
            return self.fail(&["end of input"]);
        }
        Ok((file, positions))
    }

    fn procdef(&mut self) -> Result<ProcDef, ParseError> {
        let name = self.name()?;
        let mut params = Vec::new();
        if *self.peek() == Tok::LParen {
            self.advance();
            if *self.peek() != Tok::RParen {
                params = self.decls()?;
            }
            self.expect(Tok::RParen)?;
        }
        self.expect(Tok::Define)?;
        self.scope.clear();
        self.scope.extend(params.iter().map(|d| (d.name.clone(), d.vtype)));
        let body = self.process()?;
        self.scope.clear();
        Ok(ProcDef { name, params, body })
    }

    fn decls(&mut self) -> Result<Vec<VarDecl>, ParseError> {
        let mut out = vec![self.decl()?];
        while *self.peek() == Tok::Comma {
            self.advance();
            out.push(self.decl()?);
        }
        Ok(out)
    }

    fn decl(&mut self) -> Result<VarDecl, ParseError> {
        let name = self.name()?;
        self.expect(Tok::Colon)?;
        let vtype = match self.peek() {
            Tok::Name(t) if t == "Qubit" => VarType::Qubit,
            Tok::Name(t) if t == "Integer" => VarType::Integer,
            _ => return self.fail(&["`Qubit`", "`Integer`"]),
        };
        self.advance();
        let init = if *self.peek() == Tok::Eq {
            self.advance();
            Some(match vtype {
                VarType::Qubit => Init::Ket(self.ket_literal()?),
                VarType::Integer => Init::Nat(self.expr()?),
            })
        } else {
            None
        };
        Ok(VarDecl { name, vtype, init })
    }

    fn ket_literal(&mut self) -> Result<KetLiteral, ParseError> {
        match self.peek().clone() {
            Tok::Ket(k) => {
                self.advance();
                Ok(k)
            }
            Tok::LParen => {
                self.advance();
                let a = self.coefficient()?;
                self.expect(Tok::Ket(KetLiteral::Zero))?;
                let negate = match self.peek() {
                    Tok::Plus => false,
                    Tok::Minus => true,
                    _ => return self.fail(&["`+`", "`-`"]),
                };
                self.advance();
                let mut b = self.coefficient()?;
                if negate {
                    b = -b;
                }
                self.expect(Tok::Ket(KetLiteral::One))?;
                self.expect(Tok::RParen)?;
                Ok(KetLiteral::Pair(a, b))
            }
            _ => self.fail(&["ket literal"]),
        }
    }

    fn real(&mut self) -> Result<f64, ParseError> {
        let neg = if *self.peek() == Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        let v = match self.peek() {
            Tok::Nat(n) => *n as f64,
            Tok::Real(x) => *x,
            _ => return self.fail(&["a number"]),
        };
        self.advance();
        Ok(if neg { -v } else { v })
    }

    fn coefficient(&mut self) -> Result<Complex64, ParseError> {
        if *self.peek() == Tok::LParen {
            self.advance();
            let re = self.real()?;
            let neg = match self.peek() {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => return self.fail(&["`+`", "`-`"]),
            };
            self.advance();
            let im = match self.peek() {
                Tok::Imag(x) => *x,
                _ => return self.fail(&["imaginary number"]),
            };
            self.advance();
            self.expect(Tok::RParen)?;
            return Ok(Complex64::new(re, if neg { -im } else { im }));
        }
        let neg = if *self.peek() == Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        let sign = if neg { -1.0 } else { 1.0 };
        let z = match self.peek() {
            Tok::Nat(n) => Complex64::new(sign * *n as f64, 0.0),
            Tok::Real(x) => Complex64::new(sign * x, 0.0),
            Tok::Imag(x) => Complex64::new(0.0, sign * x),
            _ => return self.fail(&["a coefficient"]),
        };
        self.advance();
        Ok(z)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut e = self.expr_atom()?;
        while *self.peek() == Tok::Plus {
            self.advance();
            let rhs = self.expr_atom()?;
            e = Expr::Add(Box::new(e), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(e)
    }

    fn expr_atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Nat(n) => {
                self.advance();
                Ok(Expr::Nat(n))
            }
            Tok::Name(_) => Ok(Expr::Var(self.name()?)),
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.fail(&["a natural number", "a variable", "`(`"]),
        }
    }

    fn process(&mut self) -> Result<ProcessTerm, ParseError> {
        self.enter()?;
        let mut t = self.seqp()?;
        loop {
            match self.peek().clone() {
                Tok::Par => {
                    self.advance();
                    let rhs = self.seqp()?;
                    t = ProcessTerm::par(t, rhs);
                }
                Tok::ParShared(s) => {
                    self.advance();
                    let rhs = self.seqp()?;
                    t = ProcessTerm::par_shared(t, rhs, &s);
                }
                _ => break,
            }
        }
        self.depth -= 1;
        Ok(t)
    }

    fn seqp(&mut self) -> Result<ProcessTerm, ParseError> {
        let mut t = self.unary()?;
        while *self.peek() == Tok::Semi {
            self.advance();
            let rhs = self.unary()?;
            t = ProcessTerm::seq(t, rhs);
        }
        Ok(t)
    }

    fn unary(&mut self) -> Result<ProcessTerm, ParseError> {
        self.enter()?;
        let mut t = self.primary()?;
        while *self.peek() == Tok::Backslash {
            self.advance();
            self.expect(Tok::LBrace)?;
            let chans = self.name_list(Tok::RBrace)?;
            self.expect(Tok::RBrace)?;
            t = ProcessTerm::Restrict(Box::new(t), chans.into_iter().collect::<BTreeSet<_>>());
        }
        self.depth -= 1;
        Ok(t)
    }

    fn primary(&mut self) -> Result<ProcessTerm, ParseError> {
        if let Some(first) = self.action_head()? {
            return self.prefix_chain(first);
        }
        match self.peek().clone() {
            Tok::Name(n) if n == "nil" => {
                self.advance();
                Ok(ProcessTerm::Nil)
            }
            Tok::Name(n) if n == "end" => {
                self.advance();
                Ok(ProcessTerm::End)
            }
            Tok::Name(_) => {
                let name = self.name()?;
                let mut args = vec![];
                if *self.peek() == Tok::LBracket {
                    self.advance();
                    args = self.name_list(Tok::RBracket)?;
                    self.expect(Tok::RBracket)?;
                }
                Ok(ProcessTerm::Invoke(name, args))
            }
            Tok::LBracket => {
                self.advance();
                let decls = self.decls()?;
                self.expect(Tok::Dot)?;
                let mark = self.scope.len();
                self.scope.extend(decls.iter().map(|d| (d.name.clone(), d.vtype)));
                let body = self.process()?;
                self.scope.truncate(mark);
                self.expect(Tok::RBracket)?;
                Ok(ProcessTerm::DeclBlock(decls, Box::new(body)))
            }
            Tok::LParen => {
                self.advance();
                let t = self.process()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            _ => self.fail(&["a process"]),
        }
    }

    /// `a₁ . a₂ . … . unary`, parsed iteratively so that long action
    /// sequences do not consume nesting depth.
    fn prefix_chain(&mut self, first: Action) -> Result<ProcessTerm, ParseError> {
        let mark = self.scope.len();
        let mut chain = vec![first];
        loop {
            self.expect(Tok::Dot)?;
            if let Some(Action::QuantumRecv(_, v)) = chain.last() {
                self.scope.push((v.clone(), VarType::Qubit));
            }
            match self.action_head()? {
                Some(a) if chain.len() < MAX_CHAIN => chain.push(a),
                Some(_) => return self.fail_msg(format!("more than {MAX_CHAIN} consecutive actions")),
                None => break,
            }
        }
        let tail = self.unary()?;
        self.scope.truncate(mark);
        Ok(ProcessTerm::actions(chain, tail))
    }

    /// Parses an action if one starts here; consumes nothing otherwise.
    fn action_head(&mut self) -> Result<Option<Action>, ParseError> {
        let Tok::Name(name) = self.peek().clone() else {
            return Ok(None);
        };
        if name == "measure" {
            return Ok(Some(Action::Measure(self.measure()?)));
        }
        if KEYWORDS.contains(&name.as_str()) {
            return Ok(None);
        }
        match self.peek_at(1) {
            Tok::Bang => {
                self.advance();
                self.advance();
                if self.is_keyword("measure") {
                    return Ok(Some(Action::SendMeasure(name, self.measure()?)));
                }
                let e = self.expr()?;
                Ok(Some(match e {
                    Expr::Var(v) if self.lookup(&v) == Some(VarType::Qubit) => Action::QuantumSend(name, v),
                    e => Action::ClassicalSend(name, e),
                }))
            }
            Tok::Query => {
                self.advance();
                self.advance();
                let v = self.name()?;
                Ok(Some(if self.lookup(&v) == Some(VarType::Integer) {
                    Action::ClassicalRecv(name, v)
                } else {
                    Action::QuantumRecv(name, v)
                }))
            }
            Tok::LBracket => {
                // a unitary when the closing bracket is followed by `.`
                let close = (self.pos + 2..self.tokens.len())
                    .find(|&i| !matches!(self.tokens[i].tok, Tok::Name(_) | Tok::Comma));
                let is_unitary = close.is_some_and(|i| {
                    self.tokens[i].tok == Tok::RBracket && self.tokens.get(i + 1).is_some_and(|t| t.tok == Tok::Dot)
                });
                if !is_unitary {
                    return Ok(None);
                }
                self.advance();
                self.advance();
                let args = self.name_list(Tok::RBracket)?;
                self.expect(Tok::RBracket)?;
                Ok(Some(Action::Unitary(name, args)))
            }
            _ => Ok(None),
        }
    }

    fn measure(&mut self) -> Result<Measure, ParseError> {
        self.advance();
        self.expect(Tok::LBracket)?;
        self.expect(Tok::LBrace)?;
        let qubits = self.name_list(Tok::RBrace)?;
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Arrow)?;
        let results = self.name_list(Tok::RBracket)?;
        self.expect(Tok::RBracket)?;
        Ok(Measure {
            observable: COMPUTATIONAL_BASIS.into(),
            qubits,
            results,
        })
    }

    fn spec(&mut self) -> Result<SpecStatement, ParseError> {
        let name = self.name()?;
        self.expect(Tok::Define)?;
        let mut spec = SpecStatement {
            name,
            vars: vec![],
            states: vec![],
            equations: vec![],
            clauses: vec![],
            ops: vec![],
        };
        self.clause(&mut spec)?;
        loop {
            let op = match self.peek() {
                Tok::And => SpecOp::And,
                Tok::Or => SpecOp::Or,
                Tok::Implies => SpecOp::Implies,
                _ => break,
            };
            self.advance();
            spec.ops.push(op);
            self.clause(&mut spec)?;
        }
        Ok(spec)
    }

    fn clause(&mut self, spec: &mut SpecStatement) -> Result<(), ParseError> {
        match self.peek().clone() {
            Tok::Name(n) if n == "var" => {
                self.advance();
                let party = self.name()?;
                self.expect(Tok::LBrace)?;
                let vars = self.name_list(Tok::RBrace)?;
                self.expect(Tok::RBrace)?;
                spec.clauses.push(SpecClause::Vars(spec.vars.len()));
                spec.vars.push(VarGroup { party, vars });
            }
            Tok::State(s) => {
                self.advance();
                spec.clauses.push(SpecClause::State(spec.states.len()));
                spec.states.push(s);
            }
            Tok::Nat(_) => {
                let lhs = self.resource_sum()?;
                let relation = match self.peek() {
                    Tok::Geq => SpecOp::Geq,
                    Tok::Define => SpecOp::Assign,
                    Tok::Equiv => SpecOp::Equiv,
                    _ => return self.fail(&["`>=`", "`:=`", "`==`"]),
                };
                self.advance();
                let rhs = self.resource_sum()?;
                spec.clauses.push(SpecClause::Equation(spec.equations.len()));
                spec.equations.push(Equation { lhs, relation, rhs });
            }
            _ => return self.fail(&["`var`", "a state", "a resource equation"]),
        }
        Ok(())
    }

    fn resource_sum(&mut self) -> Result<Vec<(u64, Resource)>, ParseError> {
        let mut out = vec![self.resource()?];
        while *self.peek() == Tok::Plus {
            self.advance();
            out.push(self.resource()?);
        }
        Ok(out)
    }

    fn resource(&mut self) -> Result<(u64, Resource), ParseError> {
        let Tok::Nat(n) = *self.peek() else {
            return self.fail(&["a count"]);
        };
        self.advance();
        let r = match self.peek() {
            Tok::Name(u) if u == "ebit" || u == "ebits" => Resource::Ebit,
            Tok::Name(u) if u == "cbit" || u == "cbits" => Resource::Cbit,
            Tok::Name(u) if u == "qubit" || u == "qubits" => Resource::Qubit,
            _ => return self.fail(&["`ebit`", "`cbit`", "`qubit`"]),
        };
        self.advance();
        Ok((n, r))
    }
}
