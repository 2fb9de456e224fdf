//! Seeded generators shared by the integration tests: random well-scoped
//! programs, an independent matrix oracle, and random density operators.

#![allow(dead_code)]

use eqpalg::ast::*;
use eqpalg::quantum::{Complex64, DensityOperator, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;

pub const HELPER: &str = "Flip";
pub const MAIN: &str = "M";

/// Classical channels, then quantum channels. Kinds never mix on one name.
const CCHANS: [&str; 2] = ["c", "e"];
const QCHANS: [&str; 2] = ["d", "f"];

/// Builds random closed programs over a small grammar subset: at most
/// `max_qubits` declared qubits and at most `max_actions` prefixes.
pub struct ProgramGen<'r, R: Rng> {
    rng: &'r mut R,
    max_actions: usize,
    used: usize,
    fresh: usize,
    declared: usize,
    max_qubits: usize,
}

impl<'r, R: Rng> ProgramGen<'r, R> {
    pub fn new(rng: &'r mut R, max_actions: usize) -> Self {
        ProgramGen {
            rng,
            max_actions,
            used: 0,
            fresh: 0,
            declared: 0,
            max_qubits: 0,
        }
    }

    pub fn file(&mut self, max_qubits: usize) -> SourceFile {
        self.used = 0;
        self.fresh = 0;
        let nq = self.rng.gen_range(1..=max_qubits.max(1));
        self.max_qubits = max_qubits.max(1);
        self.declared = nq;
        let ni = self.rng.gen_range(1..=2);
        let mut decls = Vec::new();
        let mut qubits = Vec::new();
        let mut ints = Vec::new();
        for i in 0..nq {
            let name = format!("q{i}");
            decls.push(VarDecl::qubit(&name, Some(self.ket())));
            qubits.push(name);
        }
        for i in 0..ni {
            let name = format!("n{i}");
            let init = self.rng.gen_bool(0.5).then(|| Expr::Nat(self.rng.gen_range(0..4)));
            decls.push(VarDecl::integer(&name, init));
            ints.push(name);
        }
        let body = self.term(&mut qubits.clone(), &ints, 3);
        let helper = ProcDef {
            name: HELPER.into(),
            params: vec![VarDecl::qubit("a", None)],
            body: ProcessTerm::prefix(Action::Unitary("X".into(), vec!["a".into()]), ProcessTerm::End),
        };
        let main = ProcDef {
            name: MAIN.into(),
            params: vec![],
            body: ProcessTerm::block(decls, body),
        };
        SourceFile {
            defs: vec![helper, main],
            spec: None,
            main: Some(MAIN.into()),
        }
    }

    fn ket(&mut self) -> KetLiteral {
        match self.rng.gen_range(0..5) {
            0 => KetLiteral::Zero,
            1 => KetLiteral::One,
            2 => KetLiteral::Plus,
            3 => KetLiteral::Minus,
            _ => {
                let theta: f64 = self.rng.gen_range(0.0..std::f64::consts::PI);
                let phi: f64 = self.rng.gen_range(0.0..std::f64::consts::TAU);
                let a = (theta / 2.0).cos();
                let b = (theta / 2.0).sin();
                KetLiteral::Pair(Complex64::new(a, 0.0), Complex64::new(b * phi.cos(), b * phi.sin()))
            }
        }
    }

    fn name(&mut self, base: &str) -> Name {
        self.fresh += 1;
        format!("{base}{}", self.fresh)
    }

    fn term(&mut self, qubits: &mut Vec<Name>, ints: &[Name], depth: usize) -> ProcessTerm {
        let pick = if depth == 0 || self.used >= self.max_actions {
            self.rng.gen_range(0..2)
        } else {
            self.rng.gen_range(0..6)
        };
        match pick {
            0 => self.chain(qubits, ints),
            1 => {
                if qubits.is_empty() || self.rng.gen_bool(0.5) {
                    self.chain(qubits, ints)
                } else {
                    let q = qubits.choose(self.rng).unwrap().clone();
                    ProcessTerm::Invoke(HELPER.into(), vec![q])
                }
            }
            2 | 3 => {
                let left = self.term(&mut qubits.clone(), ints, depth - 1);
                let right = self.term(&mut qubits.clone(), ints, depth - 1);
                let par = if self.rng.gen_bool(0.3) {
                    ProcessTerm::par_shared(left, right, "psi")
                } else {
                    ProcessTerm::par(left, right)
                };
                let hidden: Vec<&str> = CCHANS
                    .iter()
                    .chain(QCHANS.iter())
                    .copied()
                    .filter(|_| self.rng.gen_bool(0.4))
                    .collect();
                if hidden.is_empty() {
                    par
                } else {
                    ProcessTerm::restrict(par, hidden)
                }
            }
            4 => {
                let mut first_scope = qubits.clone();
                let first = self.chain_ending(&mut first_scope, ints, ProcessTerm::End);
                let second = self.term(qubits, ints, depth - 1);
                ProcessTerm::seq(first, second)
            }
            _ => {
                let mut scope = qubits.clone();
                let mut ints = ints.to_vec();
                let decl = if self.declared < self.max_qubits && self.rng.gen_bool(0.6) {
                    self.declared += 1;
                    let n = self.name("t");
                    scope.push(n.clone());
                    VarDecl::qubit(&n, self.rng.gen_bool(0.7).then(|| self.ket()))
                } else {
                    let n = self.name("k");
                    ints.push(n.clone());
                    VarDecl::integer(&n, None)
                };
                let body = self.term(&mut scope, &ints, depth - 1);
                ProcessTerm::block(vec![decl], body)
            }
        }
    }

    fn chain(&mut self, qubits: &mut Vec<Name>, ints: &[Name]) -> ProcessTerm {
        let tail = if self.rng.gen_bool(0.9) {
            ProcessTerm::End
        } else {
            ProcessTerm::Nil
        };
        self.chain_ending(qubits, ints, tail)
    }

    fn chain_ending(&mut self, qubits: &mut Vec<Name>, ints: &[Name], tail: ProcessTerm) -> ProcessTerm {
        let room = self.max_actions.saturating_sub(self.used);
        let n = if room == 0 {
            0
        } else {
            self.rng.gen_range(1..=room.min(3))
        };
        let mut actions = Vec::new();
        for _ in 0..n {
            actions.push(self.action(qubits, ints));
            self.used += 1;
        }
        ProcessTerm::actions(actions, tail)
    }

    fn expr(&mut self, ints: &[Name]) -> Expr {
        match self.rng.gen_range(0..3) {
            0 => Expr::Nat(self.rng.gen_range(0..8)),
            1 => Expr::Var(ints.choose(self.rng).unwrap().clone()),
            _ => Expr::Add(
                Box::new(Expr::Var(ints.choose(self.rng).unwrap().clone())),
                Box::new(Expr::Nat(self.rng.gen_range(0..8))),
            ),
        }
    }

    fn action(&mut self, qubits: &mut Vec<Name>, ints: &[Name]) -> Action {
        let cchan = CCHANS.choose(self.rng).unwrap().to_string();
        let qchan = QCHANS.choose(self.rng).unwrap().to_string();
        if qubits.is_empty() {
            return match self.rng.gen_range(0..3) {
                0 => Action::ClassicalSend(cchan, self.expr(ints)),
                1 => Action::ClassicalRecv(cchan, ints.choose(self.rng).unwrap().clone()),
                _ => {
                    let y = self.name("y");
                    qubits.push(y.clone());
                    Action::QuantumRecv(qchan, y)
                }
            };
        }
        let q = qubits.choose(self.rng).unwrap().clone();
        let int = ints.choose(self.rng).unwrap().clone();
        match self.rng.gen_range(0..9) {
            0 | 1 => {
                let gate = ["I", "X", "Y", "Z", "H"].choose(self.rng).unwrap().to_string();
                let mut args = Vec::new();
                if self.rng.gen_bool(0.2) {
                    args.push(int);
                }
                args.push(q);
                Action::Unitary(gate, args)
            }
            2 => {
                let others: Vec<&Name> = qubits.iter().filter(|o| **o != q).collect();
                match others.choose(self.rng) {
                    Some(t) => Action::Unitary("CNOT".into(), vec![q.clone(), (*t).clone()]),
                    None => Action::Unitary("H".into(), vec![q]),
                }
            }
            3 => Action::Measure(Measure {
                observable: COMPUTATIONAL_BASIS.into(),
                qubits: vec![q],
                results: vec![int],
            }),
            4 => Action::SendMeasure(
                cchan,
                Measure {
                    observable: COMPUTATIONAL_BASIS.into(),
                    qubits: vec![q],
                    results: vec![int],
                },
            ),
            5 => Action::ClassicalSend(cchan, self.expr(ints)),
            6 => Action::ClassicalRecv(cchan, int),
            7 => Action::QuantumSend(qchan, q),
            _ => {
                let y = self.name("y");
                qubits.push(y.clone());
                Action::QuantumRecv(qchan, y)
            }
        }
    }
}

/// Random mixed one-qubit state: a convex mix of a random pure state and
/// the maximally mixed one.
pub fn random_density<R: Rng>(rng: &mut R) -> DensityOperator {
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let p: f64 = rng.gen_range(0.0..1.0);
    let a = Complex64::new((theta / 2.0).cos(), 0.0);
    let b = Complex64::from_polar((theta / 2.0).sin(), phi);
    let pure = outer(&[a, b]);
    let half = Complex64::new(0.5, 0.0);
    let mixed: Vec<Complex64> = (0..4)
        .map(|i| {
            let diag = if i == 0 || i == 3 {
                half
            } else {
                Complex64::new(0.0, 0.0)
            };
            pure[i] * p + diag * (1.0 - p)
        })
        .collect();
    DensityOperator::new(Matrix::from_vec(2, mixed).unwrap()).unwrap()
}

/// `|v⟩⟨v|` as a row-major vector.
pub fn outer(v: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(v.len() * v.len());
    for a in v {
        for b in v {
            out.push(a * b.conj());
        }
    }
    out
}

/// Row-major product of two square matrices.
pub fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                out[i * n + j] += a[i * n + k] * b[k * n + j];
            }
        }
    }
    out
}

pub fn apply(m: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|k| m[i * n + k] * v[k]).sum()).collect()
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Probability of seeing `bits` on qubits `positions` of `rho`, read off
/// the diagonal. Qubit 0 is the most significant bit.
pub fn born(rho: &[Complex64], nqubits: usize, positions: &[usize], bits: &[u8]) -> f64 {
    let dim = 1usize << nqubits;
    (0..dim)
        .filter(|i| {
            positions
                .iter()
                .zip(bits)
                .all(|(p, b)| ((i >> (nqubits - 1 - p)) & 1) as u8 == *b)
        })
        .map(|i| rho[i * dim + i].re)
        .sum()
}
