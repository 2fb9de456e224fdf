use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::{c, Matrix, Operator};
use super::{QuantumError, TOLERANCE};

/// A normalized pure state over `log2(dim)` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amplitudes: Vec<Complex64>,
}

impl Ket {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Ket, QuantumError> {
        let dim = amplitudes.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(QuantumError::BadDimension(dim));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > TOLERANCE {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(Ket { amplitudes })
    }

    /// Computational basis state `|b₀b₁…⟩`, with `b₀` the most significant.
    pub fn from_bits(bits: &[u8]) -> Result<Ket, QuantumError> {
        if bits.is_empty() {
            return Err(QuantumError::BadDimension(0));
        }
        let mut index = 0usize;
        for &b in bits {
            if b > 1 {
                return Err(QuantumError::NotABit(b));
            }
            index = (index << 1) | b as usize;
        }
        let mut amplitudes = vec![c(0.0, 0.0); 1 << bits.len()];
        amplitudes[index] = c(1.0, 0.0);
        Ok(Ket { amplitudes })
    }

    pub fn plus() -> Ket {
        Ket {
            amplitudes: vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
        }
    }

    pub fn minus() -> Ket {
        Ket {
            amplitudes: vec![c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
        }
    }

    /// Single qubit `α|0⟩ + β|1⟩`.
    pub fn qubit(alpha: Complex64, beta: Complex64) -> Result<Ket, QuantumError> {
        Ket::new(vec![alpha, beta])
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn nqubits(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    /// `U|ψ⟩`.
    pub fn apply(&self, op: &Operator) -> Result<Ket, QuantumError> {
        if op.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        Ok(Ket {
            amplitudes: op.apply(&self.amplitudes),
        })
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ket { amplitudes }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(&self) -> Matrix {
        Matrix::outer(&self.amplitudes, &self.amplitudes)
    }
}

/// `⟨u|v⟩ = Σ conj(uᵢ)·vᵢ`.
pub fn inner_product(u: &Ket, v: &Ket) -> Result<Complex64, QuantumError> {
    if u.dim() != v.dim() {
        return Err(QuantumError::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(u.amplitudes.iter().zip(&v.amplitudes).map(|(a, b)| a.conj() * b).sum())
}

/// A hermitian, positive semidefinite, unit-trace matrix over `nqubits`
/// qubits. Qubit 0 is the most significant position of a basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    nqubits: usize,
    matrix: Matrix,
}

impl DensityOperator {
    /// Validates the density operator invariants.
    pub fn new(matrix: Matrix) -> Result<DensityOperator, QuantumError> {
        let dim = matrix.dim();
        if !dim.is_power_of_two() {
            return Err(QuantumError::BadDimension(dim));
        }
        let rho = DensityOperator {
            nqubits: dim.trailing_zeros() as usize,
            matrix,
        };
        rho.validate()?;
        Ok(rho)
    }

    /// The one-dimensional state of an empty register.
    pub fn empty() -> DensityOperator {
        DensityOperator {
            nqubits: 0,
            matrix: Matrix::identity(1),
        }
    }

    pub fn from_ket(ket: &Ket) -> DensityOperator {
        DensityOperator {
            nqubits: ket.nqubits(),
            matrix: ket.projector(),
        }
    }

    pub fn maximally_mixed(nqubits: usize) -> DensityOperator {
        let dim = 1usize << nqubits;
        DensityOperator {
            nqubits,
            matrix: Matrix::identity(dim).scale(c(1.0 / dim as f64, 0.0)),
        }
    }

    pub fn nqubits(&self) -> usize {
        self.nqubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        if self
            .matrix
            .data()
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(QuantumError::NonFinite);
        }
        if !self.matrix.is_hermitian(TOLERANCE) {
            return Err(QuantumError::NotHermitian);
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TOLERANCE || tr.im.abs() > TOLERANCE {
            return Err(QuantumError::NotUnitTrace(tr.re));
        }
        if !self.matrix.is_positive_semidefinite(TOLERANCE) {
            return Err(QuantumError::NotPositive);
        }
        Ok(())
    }

    /// `ρ ⊗ σ`; the qubits of `other` follow those of `self`.
    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator {
            nqubits: self.nqubits + other.nqubits,
            matrix: self.matrix.kron(&other.matrix),
        }
    }

    /// `⟨ψ|ρ|ψ⟩` for a pure state over the same register.
    pub fn fidelity(&self, ket: &Ket) -> Result<f64, QuantumError> {
        if ket.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim(),
                found: ket.dim(),
            });
        }
        let v = self.matrix.apply(ket.amplitudes());
        let overlap: Complex64 = ket.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
        Ok(overlap.re)
    }

    fn check_targets(&self, targets: &[usize]) -> Result<(), QuantumError> {
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.nqubits {
                return Err(QuantumError::QubitOutOfRange {
                    index: t,
                    nqubits: self.nqubits,
                });
            }
            if targets[..i].contains(&t) {
                return Err(QuantumError::DuplicateTarget(t));
            }
        }
        Ok(())
    }

    /// Reduced state over `keep`, listed in ascending register order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator, QuantumError> {
        self.check_targets(keep)?;
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        let traced: Vec<usize> = (0..self.nqubits).filter(|q| !kept.contains(q)).collect();
        let layout = Layout::new(self.nqubits, &kept);
        let kept_dim = 1usize << kept.len();
        let traced_layout = Layout::new(self.nqubits, &traced);
        let mut out = Matrix::zeros(kept_dim);
        for t in 0..(1usize << traced.len()) {
            let base = traced_layout.embed(0, t);
            for i in 0..kept_dim {
                let row = layout.embed(base, i);
                for j in 0..kept_dim {
                    let col = layout.embed(base, j);
                    out[(i, j)] += self.matrix[(row, col)];
                }
            }
        }
        Ok(DensityOperator {
            nqubits: kept.len(),
            matrix: out,
        })
    }

    /// `Ũ ρ Ũ†`, where `Ũ` acts as `gate` on `targets` (first target is the
    /// most significant gate index) and as the identity elsewhere.
    pub fn apply_unitary(&self, gate: &Operator, targets: &[usize]) -> Result<DensityOperator, QuantumError> {
        self.check_targets(targets)?;
        let local = 1usize << targets.len();
        if gate.dim() != local {
            return Err(QuantumError::DimensionMismatch {
                expected: local,
                found: gate.dim(),
            });
        }
        let layout = Layout::new(self.nqubits, targets);
        let dim = self.dim();
        let bases = layout.bases();
        let mut buf = vec![c(0.0, 0.0); local];

        // A = Ũ ρ, column by column.
        let mut a = self.matrix.clone();
        for col in 0..dim {
            for &base in &bases {
                for (l, slot) in buf.iter_mut().enumerate() {
                    *slot = a[(layout.embed(base, l), col)];
                }
                for m in 0..local {
                    let v = (0..local).map(|l| gate[(m, l)] * buf[l]).sum();
                    a[(layout.embed(base, m), col)] = v;
                }
            }
        }
        // ρ' = A Ũ†, row by row.
        for row in 0..dim {
            for &base in &bases {
                for (l, slot) in buf.iter_mut().enumerate() {
                    *slot = a[(row, layout.embed(base, l))];
                }
                for m in 0..local {
                    let v = (0..local).map(|l| buf[l] * gate[(m, l)].conj()).sum();
                    a[(row, layout.embed(base, m))] = v;
                }
            }
        }
        Ok(DensityOperator {
            nqubits: self.nqubits,
            matrix: a,
        })
    }

    /// Born probabilities of every outcome of a computational-basis
    /// measurement on `targets`, indexed by the outcome's bit value.
    pub fn outcome_probabilities(&self, targets: &[usize]) -> Result<Vec<f64>, QuantumError> {
        self.check_targets(targets)?;
        let layout = Layout::new(self.nqubits, targets);
        let mut probs = vec![0.0; 1usize << targets.len()];
        for base in layout.bases() {
            for (m, p) in probs.iter_mut().enumerate() {
                let i = layout.embed(base, m);
                *p += self.matrix[(i, i)].re;
            }
        }
        Ok(probs)
    }

    /// Post-measurement state `P_m ρ P_m / p(m)`.
    fn collapse(&self, targets: &[usize], outcome: usize, probability: f64) -> DensityOperator {
        let layout = Layout::new(self.nqubits, targets);
        let mut out = Matrix::zeros(self.dim());
        let bases = layout.bases();
        for &bi in &bases {
            let i = layout.embed(bi, outcome);
            for &bj in &bases {
                let j = layout.embed(bj, outcome);
                out[(i, j)] = self.matrix[(i, j)] / probability;
            }
        }
        DensityOperator {
            nqubits: self.nqubits,
            matrix: out,
        }
    }

    /// Every outcome with non-zero probability, in ascending bit order.
    pub fn measurement_branches(&self, targets: &[usize]) -> Result<Vec<MeasurementOutcome>, QuantumError> {
        let probs = self.outcome_probabilities(targets)?;
        let total: f64 = probs.iter().sum();
        if total <= TOLERANCE {
            return Err(QuantumError::ZeroProbability);
        }
        Ok(probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > TOLERANCE)
            .map(|(m, &p)| MeasurementOutcome {
                outcome: bits_of(m, targets.len()),
                probability: p,
                post_state: self.collapse(targets, m, p),
            })
            .collect())
    }

    /// Samples one outcome; `draw` in `[0, 1)` selects it by cumulative
    /// Born probability.
    pub fn measure_computational(&self, targets: &[usize], draw: f64) -> Result<MeasurementOutcome, QuantumError> {
        let branches = self.measurement_branches(targets)?;
        let mut acc = 0.0;
        for b in &branches {
            acc += b.probability;
            if draw < acc {
                return Ok(b.clone());
            }
        }
        Ok(branches.last().cloned().expect("at least one branch has mass"))
    }
}

/// Result of a projective measurement in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    /// One bit per measured qubit, in target order.
    pub outcome: Vec<u8>,
    pub probability: f64,
    pub post_state: DensityOperator,
}

impl MeasurementOutcome {
    pub fn outcome_string(&self) -> String {
        self.outcome.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }
}

fn bits_of(value: usize, width: usize) -> Vec<u8> {
    (0..width).rev().map(|k| ((value >> k) & 1) as u8).collect()
}

/// Maps a local index over a list of qubits into the full register.
struct Layout {
    /// Bit mask in the full index for each listed qubit, most significant first.
    masks: Vec<usize>,
    nqubits: usize,
    all: usize,
}

impl Layout {
    fn new(nqubits: usize, qubits: &[usize]) -> Layout {
        let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (nqubits - 1 - q)).collect();
        let all = masks.iter().fold(0, |acc, m| acc | m);
        Layout { masks, nqubits, all }
    }

    fn embed(&self, base: usize, local: usize) -> usize {
        let k = self.masks.len();
        let mut idx = base;
        for (j, mask) in self.masks.iter().enumerate() {
            if (local >> (k - 1 - j)) & 1 == 1 {
                idx |= mask;
            }
        }
        idx
    }

    /// Full indices with every listed qubit cleared.
    fn bases(&self) -> Vec<usize> {
        (0..(1usize << self.nqubits)).filter(|i| i & self.all == 0).collect()
    }
}

/// Serializable view of a density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoDigest {
    pub nqubits: usize,
    /// Row-major `[re, im]` pairs; present for registers of at most five qubits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<[f64; 2]>>,
    /// Summary for larger registers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<Fingerprint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub trace: f64,
    pub purity: f64,
    pub diagonal_entropy: f64,
}

pub const DIGEST_FULL_MATRIX_MAX_QUBITS: usize = 5;

impl RhoDigest {
    pub fn of(rho: &DensityOperator) -> RhoDigest {
        if rho.nqubits() <= DIGEST_FULL_MATRIX_MAX_QUBITS {
            RhoDigest {
                nqubits: rho.nqubits(),
                matrix: Some(rho.matrix().data().iter().map(|z| [z.re, z.im]).collect()),
                fingerprint: None,
            }
        } else {
            let m = rho.matrix();
            let diagonal_entropy = (0..m.dim())
                .map(|i| m[(i, i)].re)
                .filter(|p| *p > 0.0)
                .map(|p| -p * p.log2())
                .sum();
            RhoDigest {
                nqubits: rho.nqubits(),
                matrix: None,
                fingerprint: Some(Fingerprint {
                    trace: rho.trace().re,
                    purity: rho.purity(),
                    diagonal_entropy,
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::Gate;

    fn ket(bits: &[u8]) -> Ket {
        Ket::from_bits(bits).unwrap()
    }

    fn rho(bits: &[u8]) -> DensityOperator {
        DensityOperator::from_ket(&ket(bits))
    }

    fn bell() -> DensityOperator {
        let h = FRAC_1_SQRT_2;
        DensityOperator::from_ket(&Ket::new(vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap())
    }

    #[test]
    fn basis_kets() {
        assert_eq!(ket(&[0]).amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(ket(&[1]).amplitudes(), &[c(0.0, 0.0), c(1.0, 0.0)]);
        let k = ket(&[1, 0]);
        assert_eq!(k.dim(), 4);
        assert_eq!(k.amplitudes()[2], c(1.0, 0.0));
        assert!(Ket::from_bits(&[]).is_err());
        assert!(Ket::from_bits(&[2]).is_err());
    }

    #[test]
    fn inner_products() {
        assert_eq!(inner_product(&ket(&[0]), &ket(&[1])).unwrap(), c(0.0, 0.0));
        assert_eq!(inner_product(&ket(&[0]), &ket(&[0])).unwrap(), c(1.0, 0.0));
        let plus = ket(&[0]).apply(&Gate::H.matrix()).unwrap();
        let ip = inner_product(&plus, &ket(&[0])).unwrap();
        assert!((ip.re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12 && ip.im.abs() < 1e-12);
        assert!(inner_product(&ket(&[0]), &ket(&[0, 0])).is_err());
    }

    #[test]
    fn ket_normalization_enforced() {
        assert!(Ket::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(Ket::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).is_ok());
        assert!(Ket::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn tensor_examples() {
        assert_eq!(rho(&[0]).tensor(&rho(&[1])), rho(&[0, 1]));
        let r = DensityOperator::from_ket(&Ket::plus());
        assert_eq!(r.tensor(&DensityOperator::empty()), r);
        let t = r.tensor(&rho(&[0]));
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert!((t.matrix()[(i, j)].re - 0.5).abs() < 1e-12);
        }
        let mass: f64 = t.matrix().data().iter().map(|z| z.norm()).sum();
        assert!((mass - 2.0).abs() < 1e-12);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn partial_trace_examples() {
        assert_eq!(rho(&[0, 1]).partial_trace(&[0]).unwrap(), rho(&[0]));
        assert_eq!(rho(&[0, 1]).partial_trace(&[1]).unwrap(), rho(&[1]));
        let reduced = bell().partial_trace(&[0]).unwrap();
        assert!(reduced
            .matrix()
            .approx_eq(DensityOperator::maximally_mixed(1).matrix(), TOLERANCE));
        let b = bell();
        assert_eq!(b.partial_trace(&[0, 1]).unwrap(), b);
        assert!(b.partial_trace(&[2]).is_err());
        assert!(b.partial_trace(&[0, 0]).is_err());
    }

    #[test]
    fn apply_unitary_examples() {
        let minus = rho(&[1]).apply_unitary(&Gate::H.matrix(), &[0]).unwrap();
        assert!(minus.matrix().approx_eq(&Ket::minus().projector(), TOLERANCE));

        let b = bell();
        assert_eq!(b.apply_unitary(&Gate::I.matrix(), &[1]).unwrap(), b);

        let start = DensityOperator::from_ket(&Ket::minus()).tensor(&rho(&[1]));
        let out = start.apply_unitary(&Gate::Cnot.matrix(), &[0, 1]).unwrap();
        // CNOT(|−⟩|1⟩) = (|01⟩ − |10⟩)/√2
        let h = FRAC_1_SQRT_2;
        let expect = Ket::new(vec![c(0.0, 0.0), c(h, 0.0), c(-h, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(out.matrix().approx_eq(&expect.projector(), TOLERANCE));
    }

    #[test]
    fn apply_unitary_errors() {
        let r = rho(&[0, 0]);
        assert!(r.apply_unitary(&Gate::Cnot.matrix(), &[0]).is_err());
        assert!(r.apply_unitary(&Gate::Cnot.matrix(), &[1, 1]).is_err());
        assert!(r.apply_unitary(&Gate::X.matrix(), &[2]).is_err());
    }

    #[test]
    fn cnot_on_reversed_targets() {
        // control on qubit 1, target on qubit 0: |01⟩ -> |11⟩
        let out = rho(&[0, 1]).apply_unitary(&Gate::Cnot.matrix(), &[1, 0]).unwrap();
        assert_eq!(out, rho(&[1, 1]));
        // non-adjacent: control 0, target 2 on |100⟩ -> |101⟩
        let out = rho(&[1, 0, 0]).apply_unitary(&Gate::Cnot.matrix(), &[0, 2]).unwrap();
        assert_eq!(out, rho(&[1, 0, 1]));
    }

    #[test]
    fn measurement_examples() {
        let m = rho(&[0]).measure_computational(&[0], 0.99).unwrap();
        assert_eq!(m.outcome, vec![0]);
        assert_eq!(m.probability, 1.0);
        assert_eq!(m.post_state, rho(&[0]));

        let plus = DensityOperator::from_ket(&Ket::plus());
        let p = plus.outcome_probabilities(&[0]).unwrap();
        assert!((p[0] - 0.5).abs() < TOLERANCE && (p[1] - 0.5).abs() < TOLERANCE);
        assert_eq!(plus.measure_computational(&[0], 0.25).unwrap().outcome, vec![0]);
        assert_eq!(plus.measure_computational(&[0], 0.75).unwrap().outcome, vec![1]);

        let p = bell().outcome_probabilities(&[0, 1]).unwrap();
        let expect = [0.5, 0.0, 0.0, 0.5];
        for (got, want) in p.iter().zip(expect) {
            assert!((got - want).abs() < TOLERANCE);
        }
        let branches = bell().measurement_branches(&[0, 1]).unwrap();
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].outcome_string(), "00");
        assert_eq!(branches[1].outcome_string(), "11");
        assert_eq!(branches[1].post_state, rho(&[1, 1]));
    }

    #[test]
    fn measuring_one_half_of_bell_pair_purifies_the_other() {
        let branches = bell().measurement_branches(&[0]).unwrap();
        for b in branches {
            let other = b.post_state.partial_trace(&[1]).unwrap();
            assert!((other.purity() - 1.0).abs() < TOLERANCE);
        }
    }

    #[test]
    fn digest_switches_to_fingerprint() {
        let small = RhoDigest::of(&bell());
        assert_eq!(small.matrix.as_ref().unwrap().len(), 16);
        let big = RhoDigest::of(&DensityOperator::maximally_mixed(6));
        assert!(big.matrix.is_none());
        let fp = big.fingerprint.unwrap();
        assert!((fp.trace - 1.0).abs() < 1e-12);
        assert!((fp.diagonal_entropy - 6.0).abs() < 1e-9);
    }
}
