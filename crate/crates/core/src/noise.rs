//! State-dependent binary noise on an addressed pair.
//!
//! A noisy two-qubit gate is the ideal permutation `U_G` followed by four
//! bit-flip terms `E_k = X1^k1 X2^k2 q_k`, where `q_k` is diagonal in the
//! computational basis. Only the probabilities `p[k][j] = |q_k(j)|^2` are
//! observable; amplitudes are taken as the nonnegative square roots. The
//! column index `j` is the basis state *after* the ideal gate.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Mul;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ChannelError, StateError};
use crate::qstate::{c, conjugate_local, max_abs_diff, CMatrix, DensityMatrix, ONE, ZERO};

pub const COMPLETENESS_TOL: f64 = 1e-9;
pub const TABLE_CONVENTION: &str = "k-by-postgate-j";
pub const AMPLITUDE_CONVENTION: &str = "nonnegative-real";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateLabel {
    #[serde(rename = "IDENT")]
    Ident,
    /// Control on the first qubit of the pair.
    #[serde(rename = "CNOT_12")]
    Cnot12,
    /// Control on the second qubit of the pair.
    #[serde(rename = "CNOT_21")]
    Cnot21,
    #[serde(rename = "SWAP")]
    Swap,
    #[serde(rename = "MEAS")]
    Meas,
}

impl GateLabel {
    pub const PAIR_GATES: [GateLabel; 4] =
        [GateLabel::Ident, GateLabel::Cnot12, GateLabel::Cnot21, GateLabel::Swap];

    pub fn as_str(self) -> &'static str {
        match self {
            GateLabel::Ident => "IDENT",
            GateLabel::Cnot12 => "CNOT_12",
            GateLabel::Cnot21 => "CNOT_21",
            GateLabel::Swap => "SWAP",
            GateLabel::Meas => "MEAS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IDENT" | "ID" | "I" => Some(GateLabel::Ident),
            "CNOT_12" | "CNOT12" => Some(GateLabel::Cnot12),
            "CNOT_21" | "CNOT21" => Some(GateLabel::Cnot21),
            "SWAP" => Some(GateLabel::Swap),
            "MEAS" | "MEASURE" => Some(GateLabel::Meas),
            _ => None,
        }
    }

    /// The ideal gate's action on pair basis index `j = j1 + 2*j2`.
    pub fn classical_action(self, j: usize) -> usize {
        let (j1, j2) = (j & 1, (j >> 1) & 1);
        let (o1, o2) = match self {
            GateLabel::Ident | GateLabel::Meas => (j1, j2),
            GateLabel::Cnot12 => (j1, j2 ^ j1),
            GateLabel::Cnot21 => (j1 ^ j2, j2),
            GateLabel::Swap => (j2, j1),
        };
        o1 | (o2 << 1)
    }

    /// Permutation unitary; `MEAS` has identity ideal action.
    pub fn unitary(self) -> CMatrix {
        let mut u = CMatrix::zeros(4, 4);
        for j in 0..4 {
            u[(self.classical_action(j), j)] = ONE;
        }
        u
    }

    /// Same physical gate with the pair written in the opposite order.
    pub fn reversed(self) -> Self {
        match self {
            GateLabel::Cnot12 => GateLabel::Cnot21,
            GateLabel::Cnot21 => GateLabel::Cnot12,
            other => other,
        }
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn swap_bits(j: usize) -> usize {
    ((j & 1) << 1) | ((j >> 1) & 1)
}

/// `p[k][j]`: probability of noise term `k` given post-gate state `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct TransitionTable {
    gate: GateLabel,
    pair: (usize, usize),
    p: [[f64; 4]; 4],
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    gate: GateLabel,
    pair: [usize; 2],
    p: [[f64; 4]; 4],
    convention: String,
    #[serde(default = "default_amplitudes")]
    amplitudes: String,
}

fn default_amplitudes() -> String {
    AMPLITUDE_CONVENTION.to_string()
}

impl TryFrom<TableRepr> for TransitionTable {
    type Error = ChannelError;

    fn try_from(r: TableRepr) -> Result<Self, Self::Error> {
        if r.convention != TABLE_CONVENTION {
            return Err(ChannelError::Convention(r.convention));
        }
        if r.amplitudes != AMPLITUDE_CONVENTION {
            return Err(ChannelError::Convention(r.amplitudes));
        }
        TransitionTable::new(r.gate, (r.pair[0], r.pair[1]), r.p)
    }
}

impl From<TransitionTable> for TableRepr {
    fn from(t: TransitionTable) -> Self {
        TableRepr {
            gate: t.gate,
            pair: [t.pair.0, t.pair.1],
            p: t.p,
            convention: TABLE_CONVENTION.to_string(),
            amplitudes: AMPLITUDE_CONVENTION.to_string(),
        }
    }
}

impl TransitionTable {
    pub fn new(gate: GateLabel, pair: (usize, usize), p: [[f64; 4]; 4]) -> Result<Self, ChannelError> {
        if pair.0 == pair.1 {
            return Err(ChannelError::DegeneratePair(pair.0));
        }
        for j in 0..4 {
            let mut sum = 0.0;
            for (k, row) in p.iter().enumerate() {
                let value = row[j];
                if !(-1e-12..=1.0 + 1e-12).contains(&value) || !value.is_finite() {
                    return Err(ChannelError::EntryOutOfRange { k, j, value });
                }
                sum += value;
            }
            if (sum - 1.0).abs() > COMPLETENESS_TOL {
                return Err(ChannelError::Incomplete { j, sum });
            }
        }
        Ok(Self { gate, pair, p })
    }

    pub fn noiseless(gate: GateLabel, pair: (usize, usize)) -> Self {
        let mut p = [[0.0; 4]; 4];
        p[0] = [1.0; 4];
        Self::new(gate, pair, p).expect("noiseless table is valid")
    }

    /// `p[k][j] = probs[k]` for every `j`.
    pub fn state_independent(gate: GateLabel, pair: (usize, usize), probs: [f64; 4]) -> Result<Self, ChannelError> {
        let mut p = [[0.0; 4]; 4];
        for (k, row) in p.iter_mut().enumerate() {
            *row = [probs[k]; 4];
        }
        Self::new(gate, pair, p)
    }

    /// Independent flips on each qubit with probabilities `f1`, `f2`.
    pub fn independent_flips(gate: GateLabel, pair: (usize, usize), f1: f64, f2: f64) -> Result<Self, ChannelError> {
        Self::state_independent(
            gate,
            pair,
            [(1.0 - f1) * (1.0 - f2), f1 * (1.0 - f2), (1.0 - f1) * f2, f1 * f2],
        )
    }

    /// Every column drawn from a flat Dirichlet distribution.
    pub fn random<R: Rng + ?Sized>(gate: GateLabel, pair: (usize, usize), rng: &mut R) -> Self {
        let mut p = [[0.0; 4]; 4];
        for j in 0..4 {
            let w: Vec<f64> = (0..4).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = w.iter().sum();
            for k in 0..4 {
                p[k][j] = w[k] / total;
            }
        }
        Self::new(gate, pair, renormalized(p)).expect("random columns are stochastic")
    }

    /// Random table with error mass per column uniform in `[0, max_error]`.
    pub fn random_near_ideal<R: Rng + ?Sized>(
        gate: GateLabel,
        pair: (usize, usize),
        max_error: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = [[0.0; 4]; 4];
        for j in 0..4 {
            let err = rng.random::<f64>() * max_error;
            let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            p[0][j] = 1.0 - err;
            for k in 1..4 {
                p[k][j] = err * w[k - 1] / total;
            }
        }
        Self::new(gate, pair, renormalized(p)).expect("near-ideal columns are stochastic")
    }

    pub fn gate(&self) -> GateLabel {
        self.gate
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn p(&self) -> &[[f64; 4]; 4] {
        &self.p
    }

    /// Probability that post-gate state `j` is left untouched.
    pub fn success(&self, j: usize) -> f64 {
        self.p[0][j]
    }

    pub fn error_mass(&self, j: usize) -> f64 {
        1.0 - self.p[0][j]
    }

    pub fn is_state_independent(&self, tol: f64) -> bool {
        self.p.iter().all(|row| row.iter().all(|&x| (x - row[0]).abs() <= tol))
    }

    /// The same channel labelled on the reversed pair.
    pub fn reversed(&self) -> Self {
        let mut p = [[0.0; 4]; 4];
        for (k, row) in p.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.p[swap_bits(k)][swap_bits(j)];
            }
        }
        Self { gate: self.gate.reversed(), pair: (self.pair.1, self.pair.0), p }
    }

    /// `M[out][in] = p[out ^ G(in)][G(in)]`.
    pub fn markov_matrix(&self) -> MarkovMatrix {
        let mut m = [[0.0; 4]; 4];
        for input in 0..4 {
            let post = self.gate.classical_action(input);
            for (out, row) in m.iter_mut().enumerate() {
                row[input] = self.p[out ^ post][post];
            }
        }
        MarkovMatrix(m)
    }

    pub fn max_abs_diff(&self, other: &TransitionTable) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.p[k][j] - other.p[k][j]).abs());
            }
        }
        worst
    }
}

/// Renormalizes each column to sum to 1.
pub(crate) fn renormalized(mut p: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    for j in 0..4 {
        let sum: f64 = (0..4).map(|k| p[k][j]).sum();
        for row in p.iter_mut() {
            row[j] /= sum;
        }
    }
    p
}

/// Column-stochastic `M[out][in]` over the four pair basis states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovMatrix(pub [[f64; 4]; 4]);

impl MarkovMatrix {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        MarkovMatrix(m)
    }

    pub fn entry(&self, out: usize, input: usize) -> f64 {
        self.0[out][input]
    }

    pub fn column(&self, input: usize) -> [f64; 4] {
        [self.0[0][input], self.0[1][input], self.0[2][input], self.0[3][input]]
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        (0..4).all(|j| {
            let col = self.column(j);
            col.iter().all(|&x| (-tol..=1.0 + tol).contains(&x)) && (col.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    pub fn apply(&self, dist: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (o, row) in out.iter_mut().zip(self.0.iter()) {
            *o = row.iter().zip(dist).map(|(m, d)| m * d).sum();
        }
        out
    }

    pub fn max_abs_diff(&self, other: &MarkovMatrix) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Mul for &MarkovMatrix {
    type Output = MarkovMatrix;

    fn mul(self, rhs: &MarkovMatrix) -> MarkovMatrix {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        MarkovMatrix(m)
    }
}

/// Ideal pair unitary followed by an arbitrary Kraus set.
#[derive(Debug, Clone, PartialEq)]
pub struct PairChannel {
    ideal: CMatrix,
    kraus: Vec<CMatrix>,
}

impl PairChannel {
    pub fn new(ideal: CMatrix, kraus: Vec<CMatrix>) -> Result<Self, ChannelError> {
        for m in std::iter::once(&ideal).chain(kraus.iter()) {
            if m.nrows() != 4 || m.ncols() != 4 {
                return Err(StateError::Length { expected: 4, got: m.nrows() }.into());
            }
        }
        let ch = Self { ideal, kraus };
        let dev = ch.completeness_deviation();
        if dev > COMPLETENESS_TOL {
            return Err(ChannelError::NotComplete(dev));
        }
        Ok(ch)
    }

    pub fn noiseless(gate: GateLabel) -> Self {
        Self { ideal: gate.unitary(), kraus: vec![CMatrix::identity(4, 4)] }
    }

    pub fn ideal(&self) -> &CMatrix {
        &self.ideal
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// `max |sum_k E_k^dagger E_k - I|`.
    pub fn completeness_deviation(&self) -> f64 {
        let sum = self
            .kraus
            .iter()
            .fold(CMatrix::zeros(4, 4), |acc, e| acc + e.adjoint() * e);
        max_abs_diff(&sum, &CMatrix::identity(4, 4))
    }

    pub fn apply(&self, rho: &DensityMatrix, targets: (usize, usize)) -> Result<DensityMatrix, ChannelError> {
        let n = rho.n_qubits();
        if targets.0 == targets.1 {
            return Err(ChannelError::DegeneratePair(targets.0));
        }
        if targets.0 >= n || targets.1 >= n {
            return Err(StateError::BadQubits(format!("pair {targets:?} out of range for {n} qubits")).into());
        }
        let out = self.apply_matrix(rho.matrix(), targets);
        Ok(DensityMatrix::from_matrix_unchecked(n, out)?)
    }

    /// Channel action on a raw matrix; targets must already be validated.
    pub(crate) fn apply_matrix(&self, m: &CMatrix, targets: (usize, usize)) -> CMatrix {
        let t = [targets.0, targets.1];
        let rotated = conjugate_local(m, &self.ideal, &t);
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for e in self.kraus.iter().filter(|e| e.iter().any(|x| *x != ZERO)) {
            out += conjugate_local(&rotated, e, &t);
        }
        out
    }

    /// `M[out][in] = sum_k |<out| E_k U |in>|^2`, computed from the Kraus set.
    pub fn markov_matrix(&self) -> MarkovMatrix {
        let mut m = [[0.0; 4]; 4];
        for e in &self.kraus {
            let eu = e * &self.ideal;
            for (out, row) in m.iter_mut().enumerate() {
                for (input, x) in row.iter_mut().enumerate() {
                    *x += eu[(out, input)].norm_sqr();
                }
            }
        }
        MarkovMatrix(m)
    }

    /// This channel followed by `next`.
    pub fn then(&self, next: &PairChannel) -> PairChannel {
        compose(self, next)
    }
}

/// `a` then `b`: ideal `U_b U_a`, Kraus set `{E_l^b U_b E_k^a U_b^dagger}`.
pub fn compose(a: &PairChannel, b: &PairChannel) -> PairChannel {
    let conjugated: Vec<CMatrix> = a.kraus.iter().map(|e| conjugate_noise(e, &b.ideal)).collect();
    let kraus = b
        .kraus
        .iter()
        .flat_map(|el| conjugated.iter().map(move |ek| el * ek))
        .collect();
    PairChannel { ideal: &b.ideal * &a.ideal, kraus }
}

/// `U E U^dagger`.
pub fn conjugate_noise(e: &CMatrix, u: &CMatrix) -> CMatrix {
    u * e * u.adjoint()
}

/// Moves a `CNOT_12` noise operator through a following `CNOT_21`:
/// `U21 E U21^dagger`.
pub fn conjugate_cnot_noise(e: &CMatrix) -> CMatrix {
    conjugate_noise(e, &GateLabel::Cnot21.unitary())
}

/// Binary noise channel built from a [`TransitionTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryNoiseChannel {
    table: TransitionTable,
    channel: PairChannel,
}

impl BinaryNoiseChannel {
    pub fn new(table: TransitionTable) -> Self {
        let kraus = binary_kraus(&table);
        let channel = PairChannel { ideal: table.gate.unitary(), kraus };
        Self { table, channel }
    }

    pub fn table(&self) -> &TransitionTable {
        &self.table
    }

    pub fn gate(&self) -> GateLabel {
        self.table.gate
    }

    pub fn amplitude_convention(&self) -> &'static str {
        AMPLITUDE_CONVENTION
    }

    pub fn kraus_operators(&self) -> &[CMatrix] {
        self.channel.kraus()
    }

    pub fn ideal(&self) -> &CMatrix {
        self.channel.ideal()
    }

    pub fn as_pair_channel(&self) -> &PairChannel {
        &self.channel
    }

    pub fn into_pair_channel(self) -> PairChannel {
        self.channel
    }

    pub fn apply(&self, rho: &DensityMatrix, targets: (usize, usize)) -> Result<DensityMatrix, ChannelError> {
        self.channel.apply(rho, targets)
    }

    /// Classical fast path read straight from the table.
    pub fn markov_matrix(&self) -> MarkovMatrix {
        self.table.markov_matrix()
    }
}

/// `E_k = X1^k1 X2^k2 diag(sqrt(p[k][.]))`.
fn binary_kraus(table: &TransitionTable) -> Vec<CMatrix> {
    (0..4)
        .map(|k| {
            let mut e = CMatrix::zeros(4, 4);
            for j in 0..4 {
                e[(j ^ k, j)] = c(table.p[k][j].max(0.0).sqrt(), 0.0);
            }
            e
        })
        .collect()
}

/// SWAP approximated as `CNOT_12 . CNOT_21 . CNOT_12` on one pair.
pub fn swap_from_cnots(c12: &BinaryNoiseChannel, c21: &BinaryNoiseChannel) -> Result<PairChannel, ChannelError> {
    if c12.gate() != GateLabel::Cnot12 {
        return Err(ChannelError::GateDirectionMismatch { expected: GateLabel::Cnot12, got: c12.gate() });
    }
    if c21.gate() != GateLabel::Cnot21 {
        return Err(ChannelError::GateDirectionMismatch { expected: GateLabel::Cnot21, got: c21.gate() });
    }
    if c12.table.pair != c21.table.pair {
        return Err(ChannelError::PairMismatch(c12.table.pair, c21.table.pair));
    }
    let a = c12.as_pair_channel();
    Ok(compose(&compose(a, c21.as_pair_channel()), a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapModel {
    /// Use the SWAP table; compose from CNOTs only when none exists.
    #[default]
    Table,
    /// Always compose SWAP from the pair's CNOT tables.
    CnotComposition,
}

/// Tables keyed by `(gate, directed pair)`; a lookup also finds the
/// equivalent table stored under the reversed pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<TransitionTable>", into = "Vec<TransitionTable>")]
pub struct TableSet {
    tables: BTreeMap<(GateLabel, (usize, usize)), TransitionTable>,
}

impl From<Vec<TransitionTable>> for TableSet {
    fn from(v: Vec<TransitionTable>) -> Self {
        let mut set = TableSet::default();
        for t in v {
            set.insert(t);
        }
        set
    }
}

impl From<TableSet> for Vec<TransitionTable> {
    fn from(s: TableSet) -> Self {
        s.tables.into_values().collect()
    }
}

impl TableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: TransitionTable) -> Option<TransitionTable> {
        self.tables.insert((table.gate, table.pair), table)
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionTable> {
        self.tables.values()
    }

    pub fn get_exact(&self, gate: GateLabel, pair: (usize, usize)) -> Option<&TransitionTable> {
        self.tables.get(&(gate, pair))
    }

    /// Exact entry, else the reversed-pair equivalent relabelled.
    pub fn lookup(&self, gate: GateLabel, pair: (usize, usize)) -> Option<TransitionTable> {
        self.get_exact(gate, pair)
            .cloned()
            .or_else(|| self.get_exact(gate.reversed(), (pair.1, pair.0)).map(|t| t.reversed()))
    }

    /// Channel for `gate` on `pair`, honoring the SWAP policy.
    pub fn channel(&self, gate: GateLabel, pair: (usize, usize), swap: SwapModel) -> Option<PairChannel> {
        if gate == GateLabel::Swap {
            let table = match swap {
                SwapModel::Table => self.lookup(gate, pair),
                SwapModel::CnotComposition => None,
            };
            if let Some(t) = table {
                return Some(BinaryNoiseChannel::new(t).into_pair_channel());
            }
            let c12 = BinaryNoiseChannel::new(self.lookup(GateLabel::Cnot12, pair)?);
            let c21 = BinaryNoiseChannel::new(self.lookup(GateLabel::Cnot21, pair)?);
            return swap_from_cnots(&c12, &c21).ok();
        }
        self.lookup(gate, pair).map(|t| BinaryNoiseChannel::new(t).into_pair_channel())
    }

    /// Classical Markov matrix of the channel selected by [`TableSet::channel`].
    pub fn markov_matrix(&self, gate: GateLabel, pair: (usize, usize), swap: SwapModel) -> Option<MarkovMatrix> {
        if gate != GateLabel::Swap || swap == SwapModel::Table {
            if let Some(t) = self.lookup(gate, pair) {
                return Some(t.markov_matrix());
            }
        }
        self.channel(gate, pair, swap).map(|ch| ch.markov_matrix())
    }
}
