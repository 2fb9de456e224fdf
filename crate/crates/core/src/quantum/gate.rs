use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use super::matrix::{c, Matrix, Operator};
use super::QuantumError;

/// The fixed gate set available to programs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    I,
    X,
    Y,
    Z,
    H,
    Cnot,
    /// Phase shift `|1⟩ ↦ e^{iφ}|1⟩`.
    Phase(f64),
}

impl Gate {
    /// Looks up a gate by name. `R` requires a phase, every other gate
    /// forbids one.
    pub fn from_name(name: &str, phase: Option<f64>) -> Result<Gate, QuantumError> {
        let gate = match (name, phase) {
            ("I", None) => Gate::I,
            ("X", None) => Gate::X,
            ("Y", None) => Gate::Y,
            ("Z", None) => Gate::Z,
            ("H", None) => Gate::H,
            ("CNOT", None) => Gate::Cnot,
            ("R", Some(phi)) if phi.is_finite() => Gate::Phase(phi),
            _ => return Err(QuantumError::UnknownGate(name.to_string())),
        };
        Ok(gate)
    }

    pub fn arity(&self) -> usize {
        match self {
            Gate::Cnot => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::I => "I",
            Gate::X => "X",
            Gate::Y => "Y",
            Gate::Z => "Z",
            Gate::H => "H",
            Gate::Cnot => "CNOT",
            Gate::Phase(_) => "R",
        }
    }

    pub fn matrix(&self) -> Operator {
        let zero = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let rows = match *self {
            Gate::I => vec![vec![one, zero], vec![zero, one]],
            Gate::X => vec![vec![zero, one], vec![one, zero]],
            // Y|0⟩ = -i|1⟩, Y|1⟩ = i|0⟩
            Gate::Y => vec![vec![zero, c(0.0, 1.0)], vec![c(0.0, -1.0), zero]],
            Gate::Z => vec![vec![one, zero], vec![zero, -one]],
            Gate::H => {
                let h = c(FRAC_1_SQRT_2, 0.0);
                vec![vec![h, h], vec![h, -h]]
            }
            Gate::Cnot => vec![
                vec![one, zero, zero, zero],
                vec![zero, one, zero, zero],
                vec![zero, zero, zero, one],
                vec![zero, zero, one, zero],
            ],
            Gate::Phase(phi) => vec![vec![one, zero], vec![zero, c(phi.cos(), phi.sin())]],
        };
        Matrix::from_rows(rows).expect("gate tables are square and finite")
    }
}

impl FromStr for Gate {
    type Err = QuantumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Gate::from_name(s, None)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::Phase(phi) => write!(f, "R({phi})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Matrix of a named gate.
pub fn standard_gate(name: &str, phase: Option<f64>) -> Result<Operator, QuantumError> {
    Gate::from_name(name, phase).map(|g| g.matrix())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::quantum::{Ket, TOLERANCE};

    const ALL: [Gate; 7] = [
        Gate::I,
        Gate::X,
        Gate::Y,
        Gate::Z,
        Gate::H,
        Gate::Cnot,
        Gate::Phase(0.7),
    ];

    #[test]
    fn every_gate_is_unitary() {
        for g in ALL {
            assert!(g.matrix().is_unitary(TOLERANCE), "{g} is not unitary");
        }
    }

    #[test]
    fn paulis_and_hadamard_are_hermitian() {
        for g in [Gate::I, Gate::X, Gate::Y, Gate::Z, Gate::H] {
            assert!(g.matrix().is_hermitian(TOLERANCE), "{g} is not hermitian");
        }
        let h = Gate::H.matrix();
        assert!((&h * &h.adjoint()).approx_eq(&Matrix::identity(2), TOLERANCE));
    }

    #[test]
    fn hadamard_maps_zero_to_plus() {
        let out = Gate::H.matrix().apply(Ket::from_bits(&[0]).unwrap().amplitudes());
        assert!((out[0].re - FRAC_1_SQRT_2).abs() < TOLERANCE);
        assert!((out[1].re - FRAC_1_SQRT_2).abs() < TOLERANCE);
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        let out = Gate::Cnot.matrix().apply(Ket::from_bits(&[1, 0]).unwrap().amplitudes());
        assert_eq!(out, Ket::from_bits(&[1, 1]).unwrap().amplitudes());
    }

    #[test]
    fn z_negates_one() {
        let out = Gate::Z.matrix().apply(Ket::from_bits(&[1]).unwrap().amplitudes());
        assert_eq!(out, vec![c(0.0, 0.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn y_follows_sign_convention() {
        let y = Gate::Y.matrix();
        assert_eq!(y.apply(&[c(1.0, 0.0), c(0.0, 0.0)]), vec![c(0.0, 0.0), c(0.0, -1.0)]);
        assert_eq!(y.apply(&[c(0.0, 0.0), c(1.0, 0.0)]), vec![c(0.0, 1.0), c(0.0, 0.0)]);
    }

    #[test]
    fn phase_pi_is_z() {
        let r = standard_gate("R", Some(PI)).unwrap();
        assert!(r.approx_eq(&Gate::Z.matrix(), TOLERANCE));
    }

    #[test]
    fn unknown_and_malformed_names_rejected() {
        assert!(standard_gate("T", None).is_err());
        assert!(standard_gate("R", None).is_err());
        assert!(standard_gate("H", Some(1.0)).is_err());
    }
}
