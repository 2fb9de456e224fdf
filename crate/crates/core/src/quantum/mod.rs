//! Complex linear algebra and the quantum-mechanical primitives the engine
//! is built on: kets, density operators, gates, partial trace and
//! computational-basis measurement.
//!
//! Registers are ordered: qubit 0 is the leftmost factor of a tensor product
//! and the most significant bit of a basis index, so `|10⟩` has index 2.

mod gate;
mod matrix;
mod state;

use thiserror::Error;

pub use gate::{standard_gate, Gate};
pub use matrix::{Matrix, Operator};
pub use num_complex::Complex64;
pub use state::{
    inner_product, DensityOperator, Fingerprint, Ket, MeasurementOutcome, RhoDigest, DIGEST_FULL_MATRIX_MAX_QUBITS,
};

/// Absolute tolerance for every numerical invariant check.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("matrix is not square ({rows} rows, {cols} columns)")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {0} is not a positive power of two")]
    BadDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite entry")]
    NonFinite,
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("{0} is not a bit")]
    NotABit(u8),
    #[error("matrix is not hermitian")]
    NotHermitian,
    #[error("matrix is not positive semidefinite")]
    NotPositive,
    #[error("trace is {0}, expected 1")]
    NotUnitTrace(f64),
    #[error("qubit index {index} out of range for a {nqubits}-qubit register")]
    QubitOutOfRange { index: usize, nqubits: usize },
    #[error("qubit {0} listed twice")]
    DuplicateTarget(usize),
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("measurement has no outcome with non-zero probability")]
    ZeroProbability,
}

/// Convenience for building complex literals.
pub fn complex(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(test)]
mod props {
    use proptest::prelude::*;

    use super::*;

    /// Random mixed state: normalized `A A†` for a random complex `A`.
    fn arb_density(nqubits: usize) -> impl Strategy<Value = DensityOperator> {
        let dim = 1usize << nqubits;
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_filter_map(
            "degenerate sample",
            move |entries| {
                let data = entries.into_iter().map(|(re, im)| complex(re, im)).collect();
                let a = Matrix::from_vec(dim, data).ok()?;
                let m = &a * &a.adjoint();
                let tr = m.trace().re;
                if tr < 1e-6 {
                    return None;
                }
                DensityOperator::new(m.scale(complex(1.0 / tr, 0.0))).ok()
            },
        )
    }

    fn arb_gate() -> impl Strategy<Value = Gate> {
        prop_oneof![
            Just(Gate::I),
            Just(Gate::X),
            Just(Gate::Y),
            Just(Gate::Z),
            Just(Gate::H),
            Just(Gate::Cnot),
            (-6.3f64..6.3).prop_map(Gate::Phase),
        ]
    }

    fn power_traces(rho: &DensityOperator) -> Vec<f64> {
        let mut p = rho.matrix().clone();
        let mut out = Vec::new();
        for _ in 0..rho.dim() {
            out.push(p.trace().re);
            p = &p * rho.matrix();
        }
        out
    }

    proptest! {
        #[test]
        fn unitaries_preserve_density_invariants(rho in arb_density(3), gate in arb_gate(), a in 0usize..3, b in 0usize..3) {
            let targets = if gate.arity() == 2 { vec![a, b] } else { vec![a] };
            prop_assume!(targets.len() == 1 || a != b);
            let out = rho.apply_unitary(&gate.matrix(), &targets).unwrap();
            prop_assert!(out.validate().is_ok());
            // spectrum is determined by the traces of the first dim powers
            for (x, y) in power_traces(&rho).iter().zip(power_traces(&out)) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn measurement_is_complete(rho in arb_density(3), t in proptest::sample::subsequence(vec![0usize, 1, 2], 1..=3)) {
            let probs = rho.outcome_probabilities(&t).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < TOLERANCE);
            for b in rho.measurement_branches(&t).unwrap() {
                prop_assert!(b.post_state.validate().is_ok());
                prop_assert!(b.probability > 0.0 && b.probability <= 1.0 + TOLERANCE);
            }
        }

        #[test]
        fn partial_trace_recovers_product_factor(a in arb_density(1), b in arb_density(2)) {
            let joint = a.tensor(&b);
            prop_assert!(joint.validate().is_ok());
            prop_assert!(joint.partial_trace(&[0]).unwrap().matrix().approx_eq(a.matrix(), TOLERANCE));
            prop_assert!(joint.partial_trace(&[1, 2]).unwrap().matrix().approx_eq(b.matrix(), TOLERANCE));
        }

        #[test]
        fn cnot_is_an_involution(rho in arb_density(2), flip in any::<bool>()) {
            let t = if flip { [1, 0] } else { [0, 1] };
            let cnot = Gate::Cnot.matrix();
            let twice = rho.apply_unitary(&cnot, &t).unwrap().apply_unitary(&cnot, &t).unwrap();
            prop_assert!(twice.matrix().approx_eq(rho.matrix(), TOLERANCE));
        }

        #[test]
        fn lifted_gate_matches_kronecker_oracle(rho in arb_density(3), gate in arb_gate()) {
            // adjacent targets starting at qubit 0: Ũ = U ⊗ I
            let targets: Vec<usize> = (0..gate.arity()).collect();
            let rest = 1usize << (3 - gate.arity());
            let full = gate.matrix().kron(&Matrix::identity(rest));
            let expect = &(&full * rho.matrix()) * &full.adjoint();
            let got = rho.apply_unitary(&gate.matrix(), &targets).unwrap();
            prop_assert!(got.matrix().approx_eq(&expect, 1e-12));
        }
    }
}
