//! Dense state representation for small registers.
//!
//! Bit order: qubit `q` is bit `q` of a basis index, so index `j = j1 + 2*j2`
//! for a pair whose first element is the least-significant bit. Kets and
//! bitstrings are always written in qubit order, first qubit leftmost:
//! `|1,0>` and `"10"` both denote index 1.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::StateError;

pub type CMatrix = DMatrix<Complex64>;

/// Largest register held densely (64x64 density matrices).
pub const MAX_QUBITS: usize = 6;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues down to this floor are accepted as numerical noise.
pub const PSD_FLOOR: f64 = -1e-9;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn check_register(n: usize) -> Result<usize, StateError> {
    if n == 0 || n > MAX_QUBITS {
        return Err(StateError::RegisterSize(n));
    }
    Ok(1 << n)
}

/// Basis index from per-qubit bits, `bits[q]` being qubit `q`.
pub fn index_from_bits(bits: &[u8]) -> usize {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (q, &b)| acc | (usize::from(b & 1) << q))
}

pub fn bits_from_index(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|q| ((index >> q) & 1) as u8).collect()
}

/// Bitstring in qubit order ("01" = qubit 0 reads 0, qubit 1 reads 1).
pub fn bitstring(index: usize, n: usize) -> String {
    (0..n)
        .map(|q| if (index >> q) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bitstring(s: &str) -> Option<usize> {
    let mut index = 0;
    for (q, ch) in s.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => index |= 1 << q,
            _ => return None,
        }
    }
    Some(index)
}

/// Pair index decomposition `j = j1 + 2*j2`.
pub fn compose_pair_index(j1: usize, j2: usize) -> usize {
    (j1 & 1) | ((j2 & 1) << 1)
}

pub fn decompose_pair_index(j: usize) -> (usize, usize) {
    (j & 1, (j >> 1) & 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: DVector<Complex64>,
}

impl PureState {
    pub fn new(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self, StateError> {
        let dim = check_register(n_qubits)?;
        if amplitudes.len() != dim {
            return Err(StateError::Length { expected: dim, got: amplitudes.len() });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(Self { n_qubits, amplitudes: DVector::from_vec(amplitudes) })
    }

    /// Normalizes the given amplitudes before validating.
    pub fn normalized(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self, StateError> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(StateError::NotNormalized(0.0));
        }
        Self::new(n_qubits, amplitudes.into_iter().map(|a| a / norm).collect())
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, StateError> {
        let dim = check_register(n_qubits)?;
        if index >= dim {
            return Err(StateError::Length { expected: dim, got: index + 1 });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self::new(n_qubits, amps)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self, StateError> {
        Self::basis(bits.len(), index_from_bits(bits))
    }

    /// Tensor product of single-qubit states, `factors[q]` on qubit `q`.
    pub fn product(factors: &[[Complex64; 2]]) -> Result<Self, StateError> {
        let n = factors.len();
        let dim = check_register(n)?;
        let amps = (0..dim)
            .map(|idx| {
                factors
                    .iter()
                    .enumerate()
                    .fold(ONE, |acc, (q, f)| acc * f[(idx >> q) & 1])
            })
            .collect();
        Self::normalized(n, amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn with_global_phase(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        Self { n_qubits: self.n_qubits, amplitudes: self.amplitudes.map(|a| a * phase) }
    }

    pub fn to_density(&self) -> DensityMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix { n_qubits: self.n_qubits, matrix: m }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian, unit trace, PSD above [`PSD_FLOOR`].
    pub fn new(n_qubits: usize, matrix: CMatrix) -> Result<Self, StateError> {
        let rho = Self::from_matrix_unchecked(n_qubits, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape-checked only; used for matrices produced by channels whose
    /// physicality is guaranteed by construction.
    pub fn from_matrix_unchecked(n_qubits: usize, matrix: CMatrix) -> Result<Self, StateError> {
        let dim = check_register(n_qubits)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(StateError::Length { expected: dim, got: matrix.nrows() });
        }
        Ok(Self { n_qubits, matrix })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, StateError> {
        Ok(PureState::basis(n_qubits, index)?.to_density())
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self, StateError> {
        let dim = check_register(n_qubits)?;
        let m = CMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0);
        Ok(Self { n_qubits, matrix: m })
    }

    /// Classical mixture of computational basis states.
    pub fn diagonal_from(n_qubits: usize, probs: &[f64]) -> Result<Self, StateError> {
        let dim = check_register(n_qubits)?;
        if probs.len() != dim {
            return Err(StateError::Length { expected: dim, got: probs.len() });
        }
        let m = CMatrix::from_diagonal(&DVector::from_iterator(dim, probs.iter().map(|&p| c(p, 0.0))));
        Self::new(n_qubits, m)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * c(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn validate(&self) -> Result<(), StateError> {
        let dev = self.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(StateError::NotHermitian(dev));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        let min = self.eigenvalues()[0];
        if min < PSD_FLOOR {
            return Err(StateError::NotPositive(min));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `F = sqrt(<psi|rho|psi>)`.
pub fn fidelity(ideal: &PureState, actual: &DensityMatrix) -> Result<f64, StateError> {
    if ideal.n_qubits != actual.n_qubits {
        return Err(StateError::DimensionMismatch { left: ideal.n_qubits, right: actual.n_qubits });
    }
    let psi = &ideal.amplitudes;
    let overlap = (psi.adjoint() * &actual.matrix * psi)[(0, 0)].re;
    if overlap < -1e-12 {
        return Err(StateError::NotPositive(overlap));
    }
    Ok(overlap.max(0.0).sqrt().min(1.0))
}

fn check_targets(targets: &[usize], n: usize) -> Result<(), StateError> {
    if targets.is_empty() {
        return Err(StateError::BadQubits("empty qubit selection".into()));
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(StateError::BadQubits(format!("qubit {t} out of range for {n} qubits")));
        }
        if targets[..i].contains(&t) {
            return Err(StateError::BadQubits(format!("qubit {t} repeated")));
        }
    }
    Ok(())
}

fn scatter(local: usize, targets: &[usize]) -> usize {
    targets
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &t)| acc | (((local >> i) & 1) << t))
}

fn gather(global: usize, targets: &[usize]) -> usize {
    targets
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &t)| acc | (((global >> t) & 1) << i))
}

/// Reduced state on `keep`; result qubit `i` is input qubit `keep[i]`.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix, StateError> {
    let n = rho.n_qubits;
    check_targets(keep, n)?;
    let k = keep.len();
    let kept_mask = keep.iter().fold(0, |m, &q| m | (1 << q));
    let rest: Vec<usize> = (0..n).filter(|q| kept_mask & (1 << q) == 0).collect();
    let dk = 1 << k;
    let mut out = CMatrix::zeros(dk, dk);
    for env in 0..(1usize << rest.len()) {
        let base = scatter(env, &rest);
        for a in 0..dk {
            let row = base | scatter(a, keep);
            for b in 0..dk {
                out[(a, b)] += rho.matrix[(row, base | scatter(b, keep))];
            }
        }
    }
    DensityMatrix::from_matrix_unchecked(k, out)
}

/// Embeds a `2^k x 2^k` operator acting on `targets` (local bit `i` is
/// `targets[i]`) into an `n`-qubit register.
pub fn embed_op(op: &CMatrix, targets: &[usize], n: usize) -> Result<CMatrix, StateError> {
    let dim = check_register(n)?;
    check_targets(targets, n)?;
    let d = 1 << targets.len();
    if op.nrows() != d || op.ncols() != d {
        return Err(StateError::Length { expected: d, got: op.nrows() });
    }
    let mask = scatter(d - 1, targets);
    let mut out = CMatrix::zeros(dim, dim);
    for row in 0..dim {
        for col in 0..dim {
            if row & !mask == col & !mask {
                out[(row, col)] = op[(gather(row, targets), gather(col, targets))];
            }
        }
    }
    Ok(out)
}

pub fn embed_two_qubit_op(op: &CMatrix, targets: (usize, usize), n: usize) -> Result<CMatrix, StateError> {
    embed_op(op, &[targets.0, targets.1], n)
}

fn local_blocks(dim: usize, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let d = 1 << targets.len();
    let mask = scatter(d - 1, targets);
    let bases = (0..dim).filter(|i| i & mask == 0).collect();
    let offsets = (0..d).map(|l| scatter(l, targets)).collect();
    (bases, offsets)
}

/// `op * m` with `op` acting locally on `targets`.
pub fn left_apply(m: &CMatrix, op: &CMatrix, targets: &[usize]) -> CMatrix {
    let dim = m.nrows();
    let (bases, offsets) = local_blocks(dim, targets);
    let d = offsets.len();
    let mut out = CMatrix::zeros(dim, m.ncols());
    let mut buf = vec![ZERO; d];
    for &base in &bases {
        for col in 0..m.ncols() {
            for (l, off) in offsets.iter().enumerate() {
                buf[l] = m[(base | off, col)];
            }
            for a in 0..d {
                let mut acc = ZERO;
                for l in 0..d {
                    acc += op[(a, l)] * buf[l];
                }
                out[(base | offsets[a], col)] = acc;
            }
        }
    }
    out
}

/// `m * op^dagger` with `op` acting locally on `targets`.
pub fn right_apply_adjoint(m: &CMatrix, op: &CMatrix, targets: &[usize]) -> CMatrix {
    let dim = m.ncols();
    let (bases, offsets) = local_blocks(dim, targets);
    let d = offsets.len();
    let mut out = CMatrix::zeros(m.nrows(), dim);
    let mut buf = vec![ZERO; d];
    for row in 0..m.nrows() {
        for &base in &bases {
            for (l, off) in offsets.iter().enumerate() {
                buf[l] = m[(row, base | off)];
            }
            for a in 0..d {
                let mut acc = ZERO;
                for l in 0..d {
                    acc += buf[l] * op[(a, l)].conj();
                }
                out[(row, base | offsets[a])] = acc;
            }
        }
    }
    out
}

/// `op * m * op^dagger` without building the embedded operator.
pub fn conjugate_local(m: &CMatrix, op: &CMatrix, targets: &[usize]) -> CMatrix {
    right_apply_adjoint(&left_apply(m, op, targets), op, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_letter(ch: char) -> Option<Self> {
        match ch.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn matrix(self) -> CMatrix {
        let entries = match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        };
        CMatrix::from_row_slice(2, 2, &entries)
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Phase `c` with `P|b> = c|b'>`.
    fn phase(self, bit: usize) -> Complex64 {
        match (self, bit) {
            (Pauli::I | Pauli::X, _) => ONE,
            (Pauli::Y, 0) => c(0.0, 1.0),
            (Pauli::Y, _) => c(0.0, -1.0),
            (Pauli::Z, 0) => ONE,
            (Pauli::Z, _) => -ONE,
        }
    }
}

/// Pauli string; letter `q` acts on qubit `q` (written leftmost first).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliLabel(Vec<Pauli>);

impl PauliLabel {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self(letters)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    /// Label number `index` in base-4 order (digit `q` selects qubit `q`'s letter).
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|q| Pauli::ALL[(index >> (2 * q)) & 3]).collect())
    }

    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (q, p)| acc | ((*p as usize) << (2 * q)))
    }

    /// All `4^n` labels in index order.
    pub fn all(n: usize) -> impl Iterator<Item = PauliLabel> {
        (0..(1usize << (2 * n))).map(move |i| PauliLabel::from_index(i, n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.0
    }

    pub fn flip_mask(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |m, (q, p)| if p.flips() { m | (1 << q) } else { m })
    }

    /// `P|y> = phase(y) |y ^ flip_mask>`.
    pub fn phase(&self, y: usize) -> Complex64 {
        self.0
            .iter()
            .enumerate()
            .fold(ONE, |acc, (q, p)| acc * p.phase((y >> q) & 1))
    }

    pub fn matrix(&self) -> CMatrix {
        let dim = 1 << self.0.len();
        let mask = self.flip_mask();
        let mut m = CMatrix::zeros(dim, dim);
        for y in 0..dim {
            m[(y ^ mask, y)] = self.phase(y);
        }
        m
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|p| write!(f, "{}", p.letter()))
    }
}

impl FromStr for PauliLabel {
    type Err = StateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(Pauli::from_letter)
            .collect::<Option<Vec<_>>>()
            .filter(|v| !v.is_empty())
            .map(PauliLabel)
            .ok_or_else(|| StateError::BadPauli(s.to_string()))
    }
}

/// `Tr(P rho)`.
pub fn pauli_expectation(rho: &DensityMatrix, label: &PauliLabel) -> Result<f64, StateError> {
    if label.len() != rho.n_qubits {
        return Err(StateError::DimensionMismatch { left: label.len(), right: rho.n_qubits });
    }
    let mask = label.flip_mask();
    let mut acc = ZERO;
    for y in 0..rho.dim() {
        acc += label.phase(y) * rho.matrix[(y, y ^ mask)];
    }
    Ok(acc.re)
}

/// Haar-random pure state.
pub fn random_pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PureState, StateError> {
    let dim = check_register(n)?;
    let amps = (0..dim)
        .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    PureState::normalized(n, amps)
}

/// Full-rank random state, `G G^dagger / Tr` with Gaussian `G`.
pub fn random_density_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DensityMatrix, StateError> {
    let dim = check_register(n)?;
    let g = CMatrix::from_fn(dim, dim, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    let mut m = m * c(1.0 / tr, 0.0);
    // exact Hermiticity
    for i in 0..dim {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..dim {
            m[(j, i)] = m[(i, j)].conj();
        }
    }
    DensityMatrix::from_matrix_unchecked(n, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bell() -> PureState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(2, vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)]).unwrap()
    }

    #[test]
    fn fidelity_examples() {
        let psi = bell();
        assert!((fidelity(&psi, &psi.to_density()).unwrap() - 1.0).abs() < 1e-12);

        let zero = PureState::basis(1, 0).unwrap();
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        assert!((fidelity(&zero, &mixed).unwrap() - 0.7071067812).abs() < 1e-10);

        let ket00 = PureState::from_bits(&[0, 0]).unwrap();
        let rho = DensityMatrix::diagonal_from(2, &[0.9, 0.1, 0.0, 0.0]).unwrap();
        assert!((fidelity(&ket00, &rho).unwrap() - 0.9486832981).abs() < 1e-10);
    }

    #[test]
    fn fidelity_dimension_mismatch() {
        let zero = PureState::basis(1, 0).unwrap();
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(matches!(fidelity(&zero, &rho), Err(StateError::DimensionMismatch { .. })));
    }

    #[test]
    fn partial_trace_examples() {
        // |01>: qubit 0 = 0, qubit 1 = 1
        let rho = PureState::from_bits(&[0, 1]).unwrap().to_density();
        let red = partial_trace(&rho, &[0]).unwrap();
        assert!(red.max_abs_diff(&DensityMatrix::basis(1, 0).unwrap()) < 1e-14);

        let red = partial_trace(&bell().to_density(), &[1]).unwrap();
        assert!(red.max_abs_diff(&DensityMatrix::maximally_mixed(1).unwrap()) < 1e-14);

        let full = bell().to_density();
        assert!(partial_trace(&full, &[0, 1]).unwrap().max_abs_diff(&full) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_keep() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(partial_trace(&rho, &[]).is_err());
        assert!(partial_trace(&rho, &[2]).is_err());
        assert!(partial_trace(&rho, &[1, 1]).is_err());
    }

    #[test]
    fn pauli_expectation_examples() {
        let z: PauliLabel = "Z".parse().unwrap();
        let x: PauliLabel = "X".parse().unwrap();
        assert!((pauli_expectation(&DensityMatrix::basis(1, 0).unwrap(), &z).unwrap() - 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PureState::new(1, vec![c(s, 0.0), c(s, 0.0)]).unwrap().to_density();
        assert!((pauli_expectation(&plus, &x).unwrap() - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(pauli_expectation(&mixed, &x).unwrap().abs() < 1e-15);
        assert!(pauli_expectation(&mixed, &"XX".parse().unwrap()).is_err());
    }

    #[test]
    fn pauli_matrix_matches_kron() {
        let label: PauliLabel = "XYZ".parse().unwrap();
        // qubit 0 is least significant, so the Kronecker order is reversed
        let expect = Pauli::Z.matrix().kronecker(&Pauli::Y.matrix()).kronecker(&Pauli::X.matrix());
        assert!(max_abs_diff(&label.matrix(), &expect) < 1e-15);
        for l in PauliLabel::all(2) {
            let m = l.matrix();
            assert!(max_abs_diff(&(&m * &m), &CMatrix::identity(4, 4)) < 1e-15);
            assert!(max_abs_diff(&m, &m.adjoint()) < 1e-15);
            assert_eq!(PauliLabel::from_index(l.index(), 2), l);
        }
    }

    fn swap4() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        for j in 0..4 {
            let (a, b) = decompose_pair_index(j);
            m[(compose_pair_index(b, a), j)] = ONE;
        }
        m
    }

    #[test]
    fn embed_examples() {
        let id = embed_two_qubit_op(&CMatrix::identity(4, 4), (0, 1), 3).unwrap();
        assert!(max_abs_diff(&id, &CMatrix::identity(8, 8)) < 1e-15);

        // |1,0,0> -> |0,1,0>
        let sw = embed_two_qubit_op(&swap4(), (0, 1), 3).unwrap();
        let v = PureState::from_bits(&[1, 0, 0]).unwrap();
        let out = &sw * v.amplitudes();
        assert_eq!(out[index_from_bits(&[0, 1, 0])], ONE);

        // CNOT control 0 target 1: |1,0> -> |1,1>
        let mut cnot = CMatrix::zeros(4, 4);
        for j in 0..4 {
            let (a, b) = decompose_pair_index(j);
            cnot[(compose_pair_index(a, b ^ a), j)] = ONE;
        }
        let e = embed_two_qubit_op(&cnot, (0, 1), 2).unwrap();
        let out = &e * PureState::from_bits(&[1, 0]).unwrap().amplitudes();
        assert_eq!(out[index_from_bits(&[1, 1])], ONE);

        assert!(embed_two_qubit_op(&cnot, (1, 1), 2).is_err());
        assert!(embed_two_qubit_op(&cnot, (0, 3), 2).is_err());
    }

    #[test]
    fn local_kernels_match_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density_matrix(4, &mut rng).unwrap();
        let op = CMatrix::from_fn(4, 4, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        for targets in [[0usize, 1], [3, 1], [2, 0]] {
            let full = embed_op(&op, &targets, 4).unwrap();
            let expect = &full * rho.matrix() * full.adjoint();
            let got = conjugate_local(rho.matrix(), &op, &targets);
            assert!(max_abs_diff(&expect, &got) < 1e-12);
        }
    }

    #[test]
    fn index_helpers_round_trip() {
        for j1 in 0..2 {
            for j2 in 0..2 {
                assert_eq!(decompose_pair_index(compose_pair_index(j1, j2)), (j1, j2));
            }
        }
        assert_eq!(bitstring(1, 2), "10");
        assert_eq!(parse_bitstring("01"), Some(2));
        assert_eq!(parse_bitstring("0x"), None);
    }

    #[test]
    fn constructors_validate() {
        assert!(PureState::new(1, vec![ONE, ONE]).is_err());
        assert!(PureState::new(7, vec![]).is_err());
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), ZERO, ZERO, c(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(1, bad), Err(StateError::NotPositive(_))));
        let nonherm = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), ZERO, c(0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(1, nonherm), Err(StateError::NotHermitian(_))));
    }
}
