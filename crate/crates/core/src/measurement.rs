//! Classical readout model, shot sampling and least-squares mitigation.
//!
//! Outcome distributions and counts carry the device qubits they refer to;
//! position `i` in a bitstring is `qubits[i]`, and index bit `i` likewise.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::error::MeasurementError;
use crate::qstate::{bitstring, parse_bitstring, DensityMatrix};

pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Mitigation refuses confusion matrices above this condition number.
pub const MAX_CONDITION: f64 = 1e6;

fn default_qubits(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn gather_bits(index: usize, positions: &[usize]) -> usize {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | (((index >> p) & 1) << i))
}

fn positions_of(sub: &[usize], within: &[usize]) -> Option<Vec<usize>> {
    sub.iter().map(|q| within.iter().position(|x| x == q)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    qubits: Vec<usize>,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(qubits: Vec<usize>, probs: Vec<f64>) -> Result<Self, MeasurementError> {
        if probs.len() != 1 << qubits.len() {
            return Err(MeasurementError::InvalidDistribution(format!(
                "{} probabilities for {} qubits",
                probs.len(),
                qubits.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < -1e-12) {
            return Err(MeasurementError::InvalidDistribution(format!("entry {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MeasurementError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { qubits, probs })
    }

    /// Distribution over qubits `0..n`.
    pub fn over(n: usize, probs: Vec<f64>) -> Result<Self, MeasurementError> {
        Self::new(default_qubits(n), probs)
    }

    pub fn point(qubits: Vec<usize>, index: usize) -> Self {
        let mut probs = vec![0.0; 1 << qubits.len()];
        probs[index] = 1.0;
        Self { qubits, probs }
    }

    pub fn uniform(qubits: Vec<usize>) -> Self {
        let d = 1 << qubits.len();
        Self { qubits, probs: vec![1.0 / d as f64; d] }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, bits: &str) -> f64 {
        parse_bitstring(bits)
            .filter(|_| bits.len() == self.qubits.len())
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn total_variation(&self, other: &Distribution) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Marginal onto `keep` (in that order).
    pub fn marginal(&self, keep: &[usize]) -> Result<Distribution, MeasurementError> {
        let pos = positions_of(keep, &self.qubits).ok_or_else(|| MeasurementError::ScopeMismatch(keep.to_vec()))?;
        let mut probs = vec![0.0; 1 << keep.len()];
        for (i, p) in self.probs.iter().enumerate() {
            probs[gather_bits(i, &pos)] += p;
        }
        Ok(Distribution { qubits: keep.to_vec(), probs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CountsRepr", into = "CountsRepr")]
pub struct ShotCounts {
    qubits: Vec<usize>,
    counts: BTreeMap<String, u64>,
    total_shots: u64,
}

#[derive(Serialize, Deserialize)]
struct CountsRepr {
    qubits: Vec<usize>,
    counts: BTreeMap<String, u64>,
    total_shots: u64,
}

impl TryFrom<CountsRepr> for ShotCounts {
    type Error = MeasurementError;

    fn try_from(r: CountsRepr) -> Result<Self, Self::Error> {
        let c = ShotCounts::new(r.qubits, r.counts)?;
        if c.total_shots != r.total_shots {
            return Err(MeasurementError::InvalidCounts(format!(
                "counts sum to {} but total_shots is {}",
                c.total_shots, r.total_shots
            )));
        }
        Ok(c)
    }
}

impl From<ShotCounts> for CountsRepr {
    fn from(c: ShotCounts) -> Self {
        CountsRepr { qubits: c.qubits, counts: c.counts, total_shots: c.total_shots }
    }
}

impl ShotCounts {
    pub fn new(qubits: Vec<usize>, counts: BTreeMap<String, u64>) -> Result<Self, MeasurementError> {
        for key in counts.keys() {
            if key.len() != qubits.len() || parse_bitstring(key).is_none() {
                return Err(MeasurementError::InvalidCounts(format!(
                    "outcome {key:?} is not a {}-bit string",
                    qubits.len()
                )));
            }
        }
        let counts: BTreeMap<String, u64> = counts.into_iter().filter(|(_, v)| *v > 0).collect();
        let total_shots = counts.values().sum();
        if total_shots == 0 {
            return Err(MeasurementError::InvalidCounts("no shots".into()));
        }
        Ok(Self { qubits, counts, total_shots })
    }

    pub fn from_indexed(qubits: Vec<usize>, by_index: &[u64]) -> Result<Self, MeasurementError> {
        let n = qubits.len();
        let counts = by_index
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, c)| (bitstring(i, n), *c))
            .collect();
        Self::new(qubits, counts)
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    pub fn get(&self, bits: &str) -> u64 {
        self.counts.get(bits).copied().unwrap_or(0)
    }

    pub fn by_index(&self) -> Vec<u64> {
        let mut v = vec![0; 1 << self.qubits.len()];
        for (k, c) in &self.counts {
            v[parse_bitstring(k).expect("validated")] += c;
        }
        v
    }

    pub fn frequencies(&self) -> Distribution {
        let total = self.total_shots as f64;
        Distribution {
            qubits: self.qubits.clone(),
            probs: self.by_index().into_iter().map(|c| c as f64 / total).collect(),
        }
    }

    pub fn marginal(&self, keep: &[usize]) -> Result<ShotCounts, MeasurementError> {
        let pos = positions_of(keep, &self.qubits).ok_or_else(|| MeasurementError::ScopeMismatch(keep.to_vec()))?;
        let mut v = vec![0u64; 1 << keep.len()];
        for (i, c) in self.by_index().into_iter().enumerate() {
            v[gather_bits(i, &pos)] += c;
        }
        ShotCounts::from_indexed(keep.to_vec(), &v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfusionScope {
    #[default]
    PerQubit,
    PerPair,
}

/// Readout transition matrices `C[observed][true]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfusionRepr", into = "ConfusionRepr")]
pub enum ConfusionModel {
    PerQubit(BTreeMap<usize, [[f64; 2]; 2]>),
    PerPair(BTreeMap<(usize, usize), [[f64; 4]; 4]>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "kebab-case")]
enum ConfusionRepr {
    PerQubit { qubits: Vec<usize>, matrices: Vec<[[f64; 2]; 2]> },
    PerPair { pairs: Vec<[usize; 2]>, matrices: Vec<[[f64; 4]; 4]> },
}

impl TryFrom<ConfusionRepr> for ConfusionModel {
    type Error = MeasurementError;

    fn try_from(r: ConfusionRepr) -> Result<Self, Self::Error> {
        match r {
            ConfusionRepr::PerQubit { qubits, matrices } => {
                if qubits.len() != matrices.len() {
                    return Err(MeasurementError::InvalidConfusion("qubits/matrices length mismatch".into()));
                }
                ConfusionModel::per_qubit(qubits.into_iter().zip(matrices))
            }
            ConfusionRepr::PerPair { pairs, matrices } => {
                if pairs.len() != matrices.len() {
                    return Err(MeasurementError::InvalidConfusion("pairs/matrices length mismatch".into()));
                }
                ConfusionModel::per_pair(pairs.into_iter().map(|p| (p[0], p[1])).zip(matrices))
            }
        }
    }
}

impl From<ConfusionModel> for ConfusionRepr {
    fn from(m: ConfusionModel) -> Self {
        match m {
            ConfusionModel::PerQubit(map) => {
                let (qubits, matrices) = map.into_iter().unzip();
                ConfusionRepr::PerQubit { qubits, matrices }
            }
            ConfusionModel::PerPair(map) => {
                let (pairs, matrices): (Vec<_>, Vec<_>) = map.into_iter().map(|((a, b), m)| ([a, b], m)).unzip();
                ConfusionRepr::PerPair { pairs, matrices }
            }
        }
    }
}

fn check_stochastic<const D: usize>(m: &[[f64; D]; D]) -> Result<(), MeasurementError> {
    for j in 0..D {
        let mut sum = 0.0;
        for row in m {
            if !(-1e-12..=1.0 + 1e-12).contains(&row[j]) || !row[j].is_finite() {
                return Err(MeasurementError::InvalidConfusion(format!("entry {} out of range", row[j])));
            }
            sum += row[j];
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MeasurementError::InvalidConfusion(format!("column {j} sums to {sum}")));
        }
    }
    Ok(())
}

impl ConfusionModel {
    pub fn per_qubit(entries: impl IntoIterator<Item = (usize, [[f64; 2]; 2])>) -> Result<Self, MeasurementError> {
        let mut map = BTreeMap::new();
        for (q, m) in entries {
            check_stochastic(&m)?;
            if map.insert(q, m).is_some() {
                return Err(MeasurementError::InvalidConfusion(format!("qubit {q} listed twice")));
            }
        }
        Ok(ConfusionModel::PerQubit(map))
    }

    /// Joint 4x4 matrices; a pair's index is `bit(a) + 2*bit(b)`.
    pub fn per_pair(
        entries: impl IntoIterator<Item = ((usize, usize), [[f64; 4]; 4])>,
    ) -> Result<Self, MeasurementError> {
        let mut map = BTreeMap::new();
        let mut seen = Vec::new();
        for ((a, b), m) in entries {
            check_stochastic(&m)?;
            if a == b || seen.contains(&a) || seen.contains(&b) {
                return Err(MeasurementError::InvalidConfusion(format!("pair ({a}, {b}) overlaps another pair")));
            }
            seen.extend([a, b]);
            map.insert((a, b), m);
        }
        Ok(ConfusionModel::PerPair(map))
    }

    pub fn perfect(qubits: impl IntoIterator<Item = usize>) -> Self {
        ConfusionModel::PerQubit(qubits.into_iter().map(|q| (q, [[1.0, 0.0], [0.0, 1.0]])).collect())
    }

    /// Per-qubit model from `P(0|0)` and `P(1|1)`.
    pub fn from_fidelities(entries: impl IntoIterator<Item = (usize, f64, f64)>) -> Result<Self, MeasurementError> {
        Self::per_qubit(entries.into_iter().map(|(q, p00, p11)| (q, [[p00, 1.0 - p11], [1.0 - p00, p11]])))
    }

    pub fn scope(&self) -> ConfusionScope {
        match self {
            ConfusionModel::PerQubit(_) => ConfusionScope::PerQubit,
            ConfusionModel::PerPair(_) => ConfusionScope::PerPair,
        }
    }

    pub fn qubit_matrix(&self, q: usize) -> Option<[[f64; 2]; 2]> {
        match self {
            ConfusionModel::PerQubit(map) => map.get(&q).copied(),
            ConfusionModel::PerPair(_) => None,
        }
    }

    pub fn covered_qubits(&self) -> Vec<usize> {
        match self {
            ConfusionModel::PerQubit(map) => map.keys().copied().collect(),
            ConfusionModel::PerPair(map) => {
                let mut v: Vec<usize> = map.keys().flat_map(|&(a, b)| [a, b]).collect();
                v.sort_unstable();
                v
            }
        }
    }

    /// Keeps only the matrices relevant to `qubits`.
    pub fn restricted(&self, qubits: &[usize]) -> ConfusionModel {
        match self {
            ConfusionModel::PerQubit(map) => {
                ConfusionModel::PerQubit(map.iter().filter(|(q, _)| qubits.contains(q)).map(|(q, m)| (*q, *m)).collect())
            }
            ConfusionModel::PerPair(map) => ConfusionModel::PerPair(
                map.iter()
                    .filter(|((a, b), _)| qubits.contains(a) && qubits.contains(b))
                    .map(|(k, m)| (*k, *m))
                    .collect(),
            ),
        }
    }

    /// Full `2^m x 2^m` confusion matrix over `qubits` (index bit `i` is `qubits[i]`).
    pub fn matrix_for(&self, qubits: &[usize]) -> Result<DMatrix<f64>, MeasurementError> {
        // (positions within `qubits`, group matrix accessor)
        let mut groups: Vec<(Vec<usize>, Vec<Vec<f64>>)> = Vec::new();
        match self {
            ConfusionModel::PerQubit(map) => {
                let missing: Vec<usize> = qubits.iter().copied().filter(|q| !map.contains_key(q)).collect();
                if !missing.is_empty() {
                    return Err(MeasurementError::ScopeMismatch(missing));
                }
                for (i, q) in qubits.iter().enumerate() {
                    let m = map[q];
                    groups.push((vec![i], m.iter().map(|r| r.to_vec()).collect()));
                }
            }
            ConfusionModel::PerPair(map) => {
                let mut assigned = vec![false; qubits.len()];
                for i in 0..qubits.len() {
                    if assigned[i] {
                        continue;
                    }
                    let q = qubits[i];
                    let found = map.iter().find_map(|(&(a, b), m)| {
                        let partner = if a == q { b } else if b == q { a } else { return None };
                        let j = qubits.iter().position(|&x| x == partner)?;
                        Some(if a == q { (vec![i, j], m) } else { (vec![j, i], m) })
                    });
                    let Some((pos, m)) = found else {
                        return Err(MeasurementError::ScopeMismatch(vec![q]));
                    };
                    for &p in &pos {
                        assigned[p] = true;
                    }
                    groups.push((pos, m.iter().map(|r| r.to_vec()).collect()));
                }
            }
        }
        let d = 1 << qubits.len();
        Ok(DMatrix::from_fn(d, d, |obs, truth| {
            groups
                .iter()
                .map(|(pos, m)| m[gather_bits(obs, pos)][gather_bits(truth, pos)])
                .product()
        }))
    }

    /// Largest entrywise difference, group by group over `self`'s readout
    /// groups; `None` if `other` cannot cover one of them.
    pub fn max_abs_diff(&self, other: &ConfusionModel) -> Option<f64> {
        let groups: Vec<Vec<usize>> = match self {
            ConfusionModel::PerQubit(m) => m.keys().map(|&q| vec![q]).collect(),
            ConfusionModel::PerPair(m) => m.keys().map(|&(a, b)| vec![a, b]).collect(),
        };
        let mut worst: f64 = 0.0;
        for g in groups {
            let a = self.matrix_for(&g).ok()?;
            let b = other.matrix_for(&g).ok()?;
            worst = worst.max((a - b).abs().max());
        }
        Some(worst)
    }
}

/// Readout of the computational-basis diagonal through the confusion map.
/// `qubits[i]` names the device qubit held by local qubit `i` of `rho`.
pub fn measure_probs(
    rho: &DensityMatrix,
    model: &ConfusionModel,
    qubits: &[usize],
) -> Result<Distribution, MeasurementError> {
    if qubits.len() != rho.n_qubits() {
        return Err(MeasurementError::ScopeMismatch(qubits.to_vec()));
    }
    let c = model.matrix_for(qubits)?;
    let ideal = DVector::from_iterator(rho.dim(), rho.diagonal().into_iter().map(|p| p.max(0.0)));
    let out = c * ideal;
    let sum: f64 = out.iter().sum();
    Ok(Distribution { qubits: qubits.to_vec(), probs: out.iter().map(|p| p / sum).collect() })
}

/// Multinomial sample via sequential conditional binomials.
pub fn sample_shots(dist: &Distribution, shots: u64, seed: u64) -> Result<ShotCounts, MeasurementError> {
    if shots == 0 {
        return Err(MeasurementError::InvalidCounts("shots must be positive".into()));
    }
    let dist = Distribution::new(dist.qubits.clone(), dist.probs.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = shots;
    let mut mass_left = 1.0;
    let mut counts = vec![0u64; dist.probs.len()];
    for (i, &p) in dist.probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let p = p.max(0.0);
        let last = dist.probs[i + 1..].iter().all(|&q| q <= 0.0);
        let draw = if last {
            remaining
        } else {
            let cond = if mass_left > 0.0 { (p / mass_left).clamp(0.0, 1.0) } else { 1.0 };
            Binomial::new(remaining, cond).expect("probability within [0, 1]").sample(&mut rng)
        };
        counts[i] = draw;
        remaining -= draw;
        mass_left -= p;
    }
    ShotCounts::from_indexed(dist.qubits, &counts)
}

/// Unconstrained least-squares solution of `C x = y` and the condition number of `C`.
pub fn least_squares_unfold(c: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, f64), MeasurementError> {
    if c.nrows() != y.len() {
        return Err(MeasurementError::InvalidDistribution(format!(
            "{} observations for a {}-row confusion matrix",
            y.len(),
            c.nrows()
        )));
    }
    let svd = SVD::new(c.clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(MeasurementError::IllConditioned(cond));
    }
    let x = svd
        .solve(&DVector::from_column_slice(y), 0.0)
        .map_err(|e| MeasurementError::InvalidConfusion(e.to_string()))?;
    Ok((x.iter().copied().collect(), cond))
}

/// Clips negatives to zero and renormalizes.
pub fn clip_to_simplex(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / x.len() as f64; x.len()];
    }
    clipped.into_iter().map(|v| v / sum).collect()
}

/// Raw least-squares estimate of the true distribution (may leave the simplex).
pub fn mitigate_unclipped(observed: &Distribution, model: &ConfusionModel) -> Result<Vec<f64>, MeasurementError> {
    let c = model.matrix_for(&observed.qubits)?;
    Ok(least_squares_unfold(&c, &observed.probs)?.0)
}

pub fn mitigate(observed: &Distribution, model: &ConfusionModel) -> Result<Distribution, MeasurementError> {
    let raw = mitigate_unclipped(observed, model)?;
    Ok(Distribution { qubits: observed.qubits.clone(), probs: clip_to_simplex(&raw) })
}

/// Accumulates readout-calibration counts; `finalize` needs every
/// preparation of every target group.
#[derive(Debug, Clone)]
pub struct ConfusionFitter {
    scope: ConfusionScope,
    groups: Vec<Vec<usize>>,
    columns: BTreeMap<(usize, usize), Vec<u64>>,
}

impl ConfusionFitter {
    pub fn per_qubit(qubits: impl IntoIterator<Item = usize>) -> Self {
        Self {
            scope: ConfusionScope::PerQubit,
            groups: qubits.into_iter().map(|q| vec![q]).collect(),
            columns: BTreeMap::new(),
        }
    }

    pub fn per_pair(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            scope: ConfusionScope::PerPair,
            groups: pairs.into_iter().map(|(a, b)| vec![a, b]).collect(),
            columns: BTreeMap::new(),
        }
    }

    pub fn scope(&self) -> ConfusionScope {
        self.scope
    }

    /// Adds counts observed after preparing basis state `prepared`
    /// (an index over `counts.qubits()`); every target group the counts
    /// cover receives its marginal.
    pub fn add(&mut self, prepared: usize, counts: &ShotCounts) -> Result<usize, MeasurementError> {
        let mut used = 0;
        for (g, group) in self.groups.iter().enumerate() {
            let Some(pos) = positions_of(group, counts.qubits()) else { continue };
            let marginal = counts.marginal(group)?;
            let prep = gather_bits(prepared, &pos);
            let col = self.columns.entry((g, prep)).or_insert_with(|| vec![0; 1 << group.len()]);
            for (c, m) in col.iter_mut().zip(marginal.by_index()) {
                *c += m;
            }
            used += 1;
        }
        Ok(used)
    }

    pub fn missing(&self) -> Vec<(Vec<usize>, String)> {
        let mut out = Vec::new();
        for (g, group) in self.groups.iter().enumerate() {
            for prep in 0..(1 << group.len()) {
                if !self.columns.contains_key(&(g, prep)) {
                    out.push((group.clone(), bitstring(prep, group.len())));
                }
            }
        }
        out
    }

    pub fn finalize(&self) -> Result<ConfusionModel, MeasurementError> {
        let missing = self.missing();
        if !missing.is_empty() {
            return Err(MeasurementError::MissingPreparations(missing));
        }
        let column = |g: usize, prep: usize| -> Vec<f64> {
            let col = &self.columns[&(g, prep)];
            let total: u64 = col.iter().sum();
            col.iter().map(|&c| c as f64 / total as f64).collect()
        };
        match self.scope {
            ConfusionScope::PerQubit => ConfusionModel::per_qubit(self.groups.iter().enumerate().map(|(g, grp)| {
                let (c0, c1) = (column(g, 0), column(g, 1));
                (grp[0], [[c0[0], c1[0]], [c0[1], c1[1]]])
            })),
            ConfusionScope::PerPair => ConfusionModel::per_pair(self.groups.iter().enumerate().map(|(g, grp)| {
                let mut m = [[0.0; 4]; 4];
                for truth in 0..4 {
                    for (obs, v) in column(g, truth).into_iter().enumerate() {
                        m[obs][truth] = v;
                    }
                }
                ((grp[0], grp[1]), m)
            })),
        }
    }
}

/// Adds one calibration observation; see [`ConfusionFitter::add`].
pub fn fit_confusion(prepared: usize, counts: &ShotCounts, fitter: &mut ConfusionFitter) -> Result<usize, MeasurementError> {
    fitter.add(prepared, counts)
}
