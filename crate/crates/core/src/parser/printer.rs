use std::fmt::Write;

use crate::ast::*;
use crate::quantum::Complex64;

/// Renders a file so that parsing the output yields the same file.
pub fn pretty_print(file: &SourceFile) -> String {
    let mut out = String::new();
    for def in &file.defs {
        out.push_str(&def.name);
        if !def.params.is_empty() {
            let params: Vec<String> = def.params.iter().map(print_decl).collect();
            let _ = write!(out, "({})", params.join(", "));
        }
        out.push_str(" := ");
        out.push_str(&print_term(&def.body));
        out.push('\n');
    }
    if let Some(spec) = &file.spec {
        out.push_str(&print_spec(spec));
        out.push('\n');
    }
    if let Some(main) = &file.main {
        let _ = writeln!(out, "main {main}");
    }
    out
}

pub fn print_term(term: &ProcessTerm) -> String {
    let mut out = String::new();
    process(term, &mut out);
    out
}

// Levels: process (||) > seqp (;) > unary (\{..}) > primary.
fn process(t: &ProcessTerm, out: &mut String) {
    match t {
        ProcessTerm::Par(a, b) => {
            process(a, out);
            out.push_str(" || ");
            seqp(b, out);
        }
        ProcessTerm::ParShared(a, b, s) => {
            process(a, out);
            let _ = write!(out, " ||_{s} ");
            seqp(b, out);
        }
        _ => seqp(t, out),
    }
}

fn seqp(t: &ProcessTerm, out: &mut String) {
    match t {
        ProcessTerm::Seq(a, b) => {
            seqp(a, out);
            out.push_str(" ; ");
            unary(b, out);
        }
        _ => unary(t, out),
    }
}

fn unary(t: &ProcessTerm, out: &mut String) {
    match t {
        ProcessTerm::Restrict(body, chans) => {
            match **body {
                ProcessTerm::Restrict(..) => unary(body, out),
                _ => closed(body, out),
            }
            let chans: Vec<&str> = chans.iter().map(String::as_str).collect();
            let _ = write!(out, " \\ {{{}}}", chans.join(", "));
        }
        _ => primary(t, out),
    }
}

/// A term that does not absorb a following restriction.
fn closed(t: &ProcessTerm, out: &mut String) {
    match t {
        ProcessTerm::Nil | ProcessTerm::End | ProcessTerm::Invoke(..) | ProcessTerm::DeclBlock(..) => primary(t, out),
        _ => {
            out.push('(');
            process(t, out);
            out.push(')');
        }
    }
}

fn primary(t: &ProcessTerm, out: &mut String) {
    match t {
        ProcessTerm::Nil => out.push_str("nil"),
        ProcessTerm::End => out.push_str("end"),
        ProcessTerm::Prefix(a, cont) => {
            out.push_str(&print_action(a));
            out.push_str(" . ");
            unary(cont, out);
        }
        ProcessTerm::DeclBlock(decls, body) => {
            let decls: Vec<String> = decls.iter().map(print_decl).collect();
            let _ = write!(out, "[ {} . ", decls.join(", "));
            process(body, out);
            out.push_str(" ]");
        }
        ProcessTerm::Invoke(name, args) => {
            out.push_str(name);
            if !args.is_empty() {
                let _ = write!(out, "[{}]", args.join(", "));
            }
        }
        _ => {
            out.push('(');
            process(t, out);
            out.push(')');
        }
    }
}

fn print_measure(m: &Measure) -> String {
    format!("measure[{{{}}} -> {}]", m.qubits.join(", "), m.results.join(", "))
}

pub fn print_action(a: &Action) -> String {
    match a {
        Action::ClassicalSend(c, e) => format!("{c}!{}", print_expr(e)),
        Action::ClassicalRecv(c, v) | Action::QuantumRecv(c, v) => format!("{c}?{v}"),
        Action::QuantumSend(c, v) => format!("{c}!{v}"),
        Action::SendMeasure(c, m) => format!("{c}!{}", print_measure(m)),
        Action::Unitary(g, args) => format!("{g}[{}]", args.join(", ")),
        Action::Measure(m) => print_measure(m),
    }
}

pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Nat(n) => n.to_string(),
        Expr::Var(v) => v.clone(),
        Expr::Add(a, b) => match **b {
            Expr::Add(..) => format!("{} + ({})", print_expr(a), print_expr(b)),
            _ => format!("{} + {}", print_expr(a), print_expr(b)),
        },
    }
}

fn print_decl(d: &VarDecl) -> String {
    let mut s = format!("{}: {}", d.name, d.vtype);
    match &d.init {
        Some(Init::Ket(k)) => {
            let _ = write!(s, " = {}", print_ket(k));
        }
        Some(Init::Nat(e)) => {
            let _ = write!(s, " = {}", print_expr(e));
        }
        None => {}
    }
    s
}

pub fn print_ket(k: &KetLiteral) -> String {
    match k {
        KetLiteral::Zero => "|0>".into(),
        KetLiteral::One => "|1>".into(),
        KetLiteral::Plus => "|+>".into(),
        KetLiteral::Minus => "|->".into(),
        KetLiteral::Pair(a, b) => format!("({}|0> + {}|1>)", print_coefficient(*a), print_coefficient(*b)),
    }
}

fn print_coefficient(z: Complex64) -> String {
    if z.im == 0.0 && z.im.is_sign_positive() {
        format!("{}", z.re)
    } else if z.re == 0.0 && z.re.is_sign_positive() {
        format!("{}i", z.im)
    } else {
        let sign = if z.im.is_sign_negative() { '-' } else { '+' };
        format!("({}{}{}i)", z.re, sign, z.im.abs())
    }
}

fn print_spec(s: &SpecStatement) -> String {
    let mut out = format!("spec {} := ", s.name);
    for (i, clause) in s.clauses.iter().enumerate() {
        if i > 0 {
            let op = s.ops.get(i - 1).copied().unwrap_or(SpecOp::And);
            let _ = write!(out, " {} ", op.symbol());
        }
        match *clause {
            SpecClause::Vars(g) => {
                let g = &s.vars[g];
                let _ = write!(out, "var {} {{{}}}", g.party, g.vars.join(", "));
            }
            SpecClause::State(k) => {
                let _ = write!(out, "|{}>", s.states[k]);
            }
            SpecClause::Equation(k) => {
                let e = &s.equations[k];
                let side = |terms: &[(u64, Resource)]| {
                    terms
                        .iter()
                        .map(|(n, r)| format!("{n} {}", r.unit(*n)))
                        .collect::<Vec<_>>()
                        .join(" + ")
                };
                let _ = write!(out, "{} {} {}", side(&e.lhs), e.relation.symbol(), side(&e.rhs));
            }
        }
    }
    out
}
