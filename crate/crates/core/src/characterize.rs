//! Basis-state characterization: experiment plans, table estimation from
//! mitigated counts, and calibration sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::device::{run_shots, ChannelSource, DeviceModel, Program};
use crate::error::{CharacterizationError, DeviceError};
use crate::measurement::{
    clip_to_simplex, least_squares_unfold, ConfusionFitter, ConfusionModel, ConfusionScope, ShotCounts,
};
use crate::noise::{renormalized, GateLabel, PairChannel, SwapModel, TableSet, TransitionTable};
use crate::qstate::{bitstring, parse_bitstring};

pub const DEFAULT_SHOTS: u64 = 8192;
/// Mitigated probabilities below this signal a model mismatch.
pub const MISMATCH_THRESHOLD: f64 = -0.05;
/// Both CNOT orientations and SWAP on every coupling.
pub const DEFAULT_GATES: [GateLabel; 3] = [GateLabel::Cnot12, GateLabel::Cnot21, GateLabel::Swap];

pub fn default_gates() -> BTreeSet<GateLabel> {
    DEFAULT_GATES.into_iter().collect()
}

/// One basis-state preparation followed by `gate` on `pair` then readout.
/// Readout-calibration experiments use `MEAS` and list the measured qubits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Experiment {
    pub gate: GateLabel,
    pub pair: Vec<usize>,
    /// Prepared bits, `prep[i]` for `pair[i]`.
    pub prep: String,
    pub shots: u64,
}

impl Experiment {
    pub fn key(&self) -> (GateLabel, Vec<usize>, String) {
        (self.gate, self.pair.clone(), self.prep.clone())
    }

    pub fn prep_index(&self) -> usize {
        parse_bitstring(&self.prep).expect("validated preparation")
    }

    pub fn is_readout(&self) -> bool {
        self.gate == GateLabel::Meas
    }

    pub fn program(&self) -> Program {
        let mut p = Program::default();
        for (q, b) in self.pair.iter().zip(self.prep.bytes()) {
            p = p.prepare(*q, b - b'0');
        }
        if !self.is_readout() {
            p = p.barrier().gate(self.gate, (self.pair[0], self.pair[1]));
        }
        p.barrier().measure()
    }

    fn validate(&self) -> Result<(), String> {
        let width = if self.is_readout() { self.pair.len() } else { 2 };
        if self.pair.len() != width || !(1..=2).contains(&width) {
            return Err(format!("{} experiment on {} qubits", self.gate, self.pair.len()));
        }
        if self.pair.len() == 2 && self.pair[0] == self.pair[1] {
            return Err("pair addresses the same qubit twice".into());
        }
        if self.prep.len() != width || parse_bitstring(&self.prep).is_none() {
            return Err(format!("preparation {:?} is not a {width}-bit string", self.prep));
        }
        if self.shots == 0 {
            return Err("shots must be positive".into());
        }
        Ok(())
    }
}

/// How readout is calibrated by a plan.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ReadoutPlan {
    /// Two preparations for every qubit touched by the topology.
    #[default]
    PerQubit,
    /// Four preparations for each listed disjoint pair.
    PerPair(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CharacterizationPlan {
    experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTotals {
    pub circuits: usize,
    pub gate_circuits: usize,
    pub readout_circuits: usize,
    /// Two-qubit gates across all circuits.
    pub gates: usize,
    /// Same, with each SWAP counted as three CNOTs.
    pub cnot_equivalent: usize,
    pub shots: u64,
}

impl CharacterizationPlan {
    pub fn new(experiments: Vec<Experiment>) -> Result<Self, CharacterizationError> {
        let mut seen = BTreeSet::new();
        for (i, e) in experiments.iter().enumerate() {
            e.validate().map_err(|r| CharacterizationError::BadRecord(i, r))?;
            if !seen.insert(e.key()) {
                return Err(CharacterizationError::BadRecord(i, "duplicate experiment".into()));
            }
        }
        Ok(Self { experiments })
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    /// Distinct `(gate, pair)` targets, readout excluded.
    pub fn gate_pairs(&self) -> Vec<(GateLabel, (usize, usize))> {
        let set: BTreeSet<_> = self
            .experiments
            .iter()
            .filter(|e| !e.is_readout())
            .map(|e| (e.gate, (e.pair[0], e.pair[1])))
            .collect();
        set.into_iter().collect()
    }

    pub fn readout_scope(&self) -> ConfusionScope {
        if self.experiments.iter().any(|e| e.is_readout() && e.pair.len() == 2) {
            ConfusionScope::PerPair
        } else {
            ConfusionScope::PerQubit
        }
    }

    pub fn totals(&self) -> PlanTotals {
        let gate_circuits = self.experiments.iter().filter(|e| !e.is_readout()).count();
        let swaps = self.experiments.iter().filter(|e| e.gate == GateLabel::Swap).count();
        PlanTotals {
            circuits: self.experiments.len(),
            gate_circuits,
            readout_circuits: self.experiments.len() - gate_circuits,
            gates: gate_circuits,
            cnot_equivalent: gate_circuits + 2 * swaps,
            shots: self.experiments.iter().map(|e| e.shots).sum(),
        }
    }
}

/// Four preparations per `(gate, pair)` over the device's connected pairs
/// (taken as `(min, max)`), plus the readout preparations.
pub fn build_plan(
    device: &DeviceModel,
    gates: &BTreeSet<GateLabel>,
    shots: u64,
    readout: &ReadoutPlan,
) -> Result<CharacterizationPlan, CharacterizationError> {
    let pairs = device.undirected_pairs();
    if pairs.is_empty() {
        return Err(CharacterizationError::EmptyTopology);
    }
    if gates.is_empty() {
        return Err(CharacterizationError::NoGates);
    }
    if let Some(&g) = gates.iter().find(|g| **g == GateLabel::Meas) {
        return Err(CharacterizationError::UnsupportedGate(g));
    }
    let mut experiments = Vec::new();
    for &(a, b) in &pairs {
        for &gate in gates {
            for j in 0..4 {
                experiments.push(Experiment { gate, pair: vec![a, b], prep: bitstring(j, 2), shots });
            }
        }
    }
    match readout {
        ReadoutPlan::PerQubit => {
            let qubits: BTreeSet<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            for q in qubits {
                for bit in ["0", "1"] {
                    experiments.push(Experiment { gate: GateLabel::Meas, pair: vec![q], prep: bit.into(), shots });
                }
            }
        }
        ReadoutPlan::PerPair(list) => {
            for &(a, b) in list {
                for j in 0..4 {
                    experiments.push(Experiment { gate: GateLabel::Meas, pair: vec![a, b], prep: bitstring(j, 2), shots });
                }
            }
        }
    }
    CharacterizationPlan::new(experiments)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub gate: GateLabel,
    pub pair: Vec<usize>,
    pub prep: String,
    pub shots: u64,
    pub counts: ShotCounts,
}

impl ExperimentRecord {
    pub fn key(&self) -> (GateLabel, Vec<usize>, String) {
        (self.gate, self.pair.clone(), self.prep.clone())
    }
}

/// Seed for experiment `index` of a run seeded with `seed`.
pub fn experiment_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The plan a results file was drawn from: every gate it mentions, its
/// readout layout and the first record's shot count, so that absent
/// experiments still show up as missing.
pub fn infer_plan(device: &DeviceModel, records: &[ExperimentRecord]) -> Result<CharacterizationPlan, CharacterizationError> {
    let gates: BTreeSet<GateLabel> = records.iter().map(|r| r.gate).filter(|g| *g != GateLabel::Meas).collect();
    let shots = records.first().map(|r| r.shots).ok_or(CharacterizationError::NoGates)?;
    let pairs: BTreeSet<(usize, usize)> = records
        .iter()
        .filter(|r| r.gate == GateLabel::Meas && r.pair.len() == 2)
        .map(|r| (r.pair[0], r.pair[1]))
        .collect();
    let readout = if pairs.is_empty() { ReadoutPlan::PerQubit } else { ReadoutPlan::PerPair(pairs.into_iter().collect()) };
    build_plan(device, &gates, shots, &readout)
}

/// Executes experiment `index` of a run seeded with `seed`.
pub fn run_experiment(device: &DeviceModel, e: &Experiment, seed: u64, index: usize) -> Result<ExperimentRecord, DeviceError> {
    let counts = run_shots(device, &e.program(), e.shots, experiment_seed(seed, index))?;
    Ok(ExperimentRecord { gate: e.gate, pair: e.pair.clone(), prep: e.prep.clone(), shots: e.shots, counts })
}

/// Executes every experiment of `plan` on the synthetic device.
pub fn run_plan(device: &DeviceModel, plan: &CharacterizationPlan, seed: u64) -> Result<Vec<ExperimentRecord>, DeviceError> {
    plan.experiments().iter().enumerate().map(|(i, e)| run_experiment(device, e, seed, i)).collect()
}

/// `p[k][G(j)]` = mitigated probability of observing `G(j) ^ k` after
/// preparing `j`. Keys of `counts_by_prep` are pair indices `j1 + 2*j2`.
pub fn estimate_table(
    gate: GateLabel,
    pair: (usize, usize),
    counts_by_prep: &BTreeMap<usize, ShotCounts>,
    confusion: &ConfusionModel,
) -> Result<TransitionTable, CharacterizationError> {
    let missing: Vec<_> = (0..4)
        .filter(|j| !counts_by_prep.contains_key(j))
        .map(|j| (gate, vec![pair.0, pair.1], bitstring(j, 2)))
        .collect();
    if !missing.is_empty() {
        return Err(CharacterizationError::Missing(missing));
    }
    let order = [pair.0, pair.1];
    let c = confusion.matrix_for(&order)?;
    let mut p = [[0.0; 4]; 4];
    for (&j, counts) in counts_by_prep.iter().filter(|(j, _)| **j < 4) {
        let observed = counts.marginal(&order)?.frequencies();
        let (raw, _) = least_squares_unfold(&c, observed.probs())?;
        if let Some(&value) = raw.iter().find(|&&v| v < MISMATCH_THRESHOLD) {
            return Err(CharacterizationError::ModelMismatch { gate, pair, prep: j, value });
        }
        let corrected = clip_to_simplex(&raw);
        let post = gate.classical_action(j);
        for (k, row) in p.iter_mut().enumerate() {
            row[post] = corrected[post ^ k];
        }
    }
    Ok(TransitionTable::new(gate, pair, renormalized(p))?)
}

/// Calibrated model of a device: readout plus per-gate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub device: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub confusion: ConfusionModel,
    pub tables: TableSet,
    #[serde(default)]
    pub swap_model: SwapModel,
}

impl CalibrationSet {
    pub fn new(device: impl Into<String>, confusion: ConfusionModel, tables: TableSet) -> Self {
        Self { device: device.into(), timestamp: None, confusion, tables, swap_model: SwapModel::Table }
    }

    /// Calibration that equals a device's ground truth.
    pub fn from_ground_truth(device: &DeviceModel) -> Self {
        Self {
            device: device.name().to_string(),
            timestamp: None,
            confusion: device.readout().clone(),
            tables: device.ground_truth().clone(),
            swap_model: device.swap_model(),
        }
    }

    /// Largest entrywise table error against `truth`, or the first
    /// calibrated `(gate, pair)` that `truth` lacks.
    pub fn max_table_error(&self, truth: &TableSet) -> Result<f64, (GateLabel, (usize, usize))> {
        let mut worst: f64 = 0.0;
        for t in self.tables.iter() {
            let reference = truth.lookup(t.gate(), t.pair()).ok_or((t.gate(), t.pair()))?;
            worst = worst.max(t.max_abs_diff(&reference));
        }
        Ok(worst)
    }
}

impl ChannelSource for CalibrationSet {
    fn pair_channel(&self, gate: GateLabel, pair: (usize, usize)) -> Option<PairChannel> {
        self.tables.channel(gate, pair, self.swap_model)
    }
}

fn prep_over_register(pair: &[usize], prep: usize, register: &[usize]) -> usize {
    pair.iter()
        .enumerate()
        .filter(|(i, _)| (prep >> i) & 1 == 1)
        .map(|(_, q)| 1 << register.iter().position(|r| r == q).expect("register holds the pair"))
        .sum()
}

/// Fits readout first, then every gate table with mitigation applied.
pub fn calibrate(
    device: &DeviceModel,
    plan: &CharacterizationPlan,
    records: &[ExperimentRecord],
) -> Result<CalibrationSet, CharacterizationError> {
    let planned: BTreeSet<_> = plan.experiments().iter().map(Experiment::key).collect();
    let mut by_key: BTreeMap<(GateLabel, Vec<usize>, String), &ExperimentRecord> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.counts.total_shots() != r.shots {
            return Err(CharacterizationError::BadRecord(
                i,
                format!("{} shots declared, counts hold {}", r.shots, r.counts.total_shots()),
            ));
        }
        if !r.pair.iter().all(|q| r.counts.qubits().contains(q)) {
            return Err(CharacterizationError::BadRecord(i, "counts do not cover the experiment qubits".into()));
        }
        if !planned.contains(&r.key()) {
            return Err(CharacterizationError::BadRecord(i, "record is not part of the plan".into()));
        }
        if by_key.insert(r.key(), r).is_some() {
            return Err(CharacterizationError::BadRecord(i, "duplicate record".into()));
        }
    }
    let missing: Vec<_> = plan
        .experiments()
        .iter()
        .map(Experiment::key)
        .filter(|k| !by_key.contains_key(k))
        .collect();
    if !missing.is_empty() {
        return Err(CharacterizationError::Missing(missing));
    }

    let readout: Vec<&Experiment> = plan.experiments().iter().filter(|e| e.is_readout()).collect();
    let mut fitter = match plan.readout_scope() {
        ConfusionScope::PerQubit => {
            ConfusionFitter::per_qubit(readout.iter().map(|e| e.pair[0]).collect::<BTreeSet<_>>())
        }
        ConfusionScope::PerPair => ConfusionFitter::per_pair(
            readout.iter().map(|e| (e.pair[0], e.pair[1])).collect::<BTreeSet<_>>(),
        ),
    };
    for e in &readout {
        let r = by_key[&e.key()];
        let marginal = r.counts.marginal(&e.pair)?;
        fitter.add(prep_over_register(&e.pair, e.prep_index(), marginal.qubits()), &marginal)?;
    }
    let confusion = fitter.finalize()?;

    let mut grouped: BTreeMap<(GateLabel, (usize, usize)), BTreeMap<usize, ShotCounts>> = BTreeMap::new();
    for e in plan.experiments().iter().filter(|e| !e.is_readout()) {
        grouped
            .entry((e.gate, (e.pair[0], e.pair[1])))
            .or_default()
            .insert(e.prep_index(), by_key[&e.key()].counts.clone());
    }
    let mut tables = TableSet::new();
    for ((gate, pair), counts) in &grouped {
        tables.insert(estimate_table(*gate, *pair, counts, &confusion)?);
    }
    Ok(CalibrationSet::new(device.name(), confusion, tables))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{line_edges, make_line_like, run_exact};
    use crate::measurement::{measure_probs, sample_shots};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gate_set(gates: &[GateLabel]) -> BTreeSet<GateLabel> {
        gates.iter().copied().collect()
    }

    #[test]
    fn plan_sizes() {
        let dev = DeviceModel::noiseless("line", 5, line_edges(5)).unwrap();
        let plan = build_plan(
            &dev,
            &gate_set(&[GateLabel::Cnot12, GateLabel::Cnot21, GateLabel::Swap]),
            DEFAULT_SHOTS,
            &ReadoutPlan::PerQubit,
        )
        .unwrap();
        let t = plan.totals();
        assert_eq!(t.circuits, 4 * (8 + 4) + 2 * 5);
        assert_eq!(t.circuits, 58);
        assert_eq!(t.shots, 475_136);
        assert_eq!(t.gate_circuits, 48);
        assert_eq!(t.cnot_equivalent, 32 + 3 * 16);

        let single = DeviceModel::noiseless("pair", 2, vec![(0, 1)]).unwrap();
        let plan = build_plan(&single, &gate_set(&[GateLabel::Swap]), 100, &ReadoutPlan::PerQubit).unwrap();
        assert_eq!(plan.totals().gate_circuits, 4);

        let keys: BTreeSet<_> = plan.experiments().iter().map(Experiment::key).collect();
        assert_eq!(keys.len(), plan.len());
    }

    #[test]
    fn plan_errors() {
        let bare = DeviceModel::new("bare", 3, vec![], ConfusionModel::perfect(0..3)).unwrap();
        assert_eq!(
            build_plan(&bare, &gate_set(&[GateLabel::Swap]), 10, &ReadoutPlan::PerQubit),
            Err(CharacterizationError::EmptyTopology)
        );
        let dev = DeviceModel::noiseless("pair", 2, vec![(0, 1)]).unwrap();
        assert_eq!(build_plan(&dev, &BTreeSet::new(), 10, &ReadoutPlan::PerQubit), Err(CharacterizationError::NoGates));
        assert!(build_plan(&dev, &gate_set(&[GateLabel::Meas]), 10, &ReadoutPlan::PerQubit).is_err());
    }

    #[test]
    fn identity_prep_zero_maps_observed_to_table_column() {
        // no noise on readout: p[(b1,b2)][0] equals the observed frequency of b1b2
        let counts = |v: [u64; 4]| ShotCounts::from_indexed(vec![0, 1], &v).unwrap();
        let mut by_prep = BTreeMap::new();
        by_prep.insert(0, counts([700, 100, 150, 50]));
        by_prep.insert(1, counts([0, 1000, 0, 0]));
        by_prep.insert(2, counts([0, 0, 1000, 0]));
        by_prep.insert(3, counts([0, 0, 0, 1000]));
        let t = estimate_table(GateLabel::Ident, (0, 1), &by_prep, &ConfusionModel::perfect([0, 1])).unwrap();
        assert!((t.p()[0][0] - 0.7).abs() < 1e-12);
        assert!((t.p()[1][0] - 0.1).abs() < 1e-12);
        assert!((t.p()[2][0] - 0.15).abs() < 1e-12);
        assert!((t.p()[3][0] - 0.05).abs() < 1e-12);
        for j in 1..4 {
            assert!((t.success(j) - 1.0).abs() < 1e-12);
        }

        by_prep.remove(&2);
        match estimate_table(GateLabel::Ident, (0, 1), &by_prep, &ConfusionModel::perfect([0, 1])) {
            Err(CharacterizationError::Missing(m)) => assert_eq!(m, vec![(GateLabel::Ident, vec![0, 1], "01".into())]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn estimated_columns_are_indexed_by_post_gate_state() {
        let truth = TransitionTable::random_near_ideal(GateLabel::Cnot12, (0, 1), 0.2, &mut ChaCha8Rng::seed_from_u64(1));
        let m = truth.markov_matrix();
        let mut by_prep = BTreeMap::new();
        for j in 0..4 {
            let col: Vec<u64> = m.column(j).iter().map(|p| (p * 1e9).round() as u64).collect();
            by_prep.insert(j, ShotCounts::from_indexed(vec![0, 1], &col).unwrap());
        }
        let est = estimate_table(GateLabel::Cnot12, (0, 1), &by_prep, &ConfusionModel::perfect([0, 1])).unwrap();
        assert!(est.max_abs_diff(&truth) < 1e-8);
    }

    #[test]
    fn model_mismatch_is_reported() {
        // a confusion model claiming perfect-zero readout cannot explain 1 outcomes
        let confusion = ConfusionModel::per_qubit([(0, [[0.7, 0.0], [0.3, 1.0]]), (1, [[1.0, 0.0], [0.0, 1.0]])]).unwrap();
        let mut by_prep = BTreeMap::new();
        for j in 0..4 {
            let mut v = [0u64; 4];
            v[j] = 1000;
            by_prep.insert(j, ShotCounts::from_indexed(vec![0, 1], &v).unwrap());
        }
        let r = estimate_table(GateLabel::Ident, (0, 1), &by_prep, &confusion);
        assert!(matches!(r, Err(CharacterizationError::ModelMismatch { .. })), "{r:?}");
    }

    #[test]
    fn noiseless_device_calibrates_to_identity_tables() {
        let dev = DeviceModel::noiseless("line", 3, line_edges(3)).unwrap();
        let plan = build_plan(&dev, &gate_set(&[GateLabel::Cnot12, GateLabel::Swap]), 2000, &ReadoutPlan::PerQubit).unwrap();
        let records = run_plan(&dev, &plan, 3).unwrap();
        for r in &records {
            assert_eq!(r.counts.counts().len(), 1);
        }
        let calib = calibrate(&dev, &plan, &records).unwrap();
        for t in calib.tables.iter() {
            for j in 0..4 {
                assert!((t.success(j) - 1.0).abs() < 1e-12);
            }
        }
        for q in 0..3 {
            assert_eq!(calib.confusion.qubit_matrix(q).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        }
    }

    #[test]
    fn synthetic_readout_fit_recovers_truth() {
        let dev = make_line_like(3, 21);
        let plan = build_plan(&dev, &gate_set(&[GateLabel::Swap]), DEFAULT_SHOTS, &ReadoutPlan::PerQubit).unwrap();
        let records = run_plan(&dev, &plan, 8).unwrap();
        let calib = calibrate(&dev, &plan, &records).unwrap();
        let err = calib.confusion.max_abs_diff(dev.readout()).unwrap();
        assert!(err < 0.015, "readout error {err}");
        for q in 0..3 {
            let m = calib.confusion.qubit_matrix(q).unwrap();
            assert!(m[0][0] > m[1][1]);
        }
        assert!(calib.max_table_error(dev.ground_truth()).unwrap() < 0.02);
    }

    #[test]
    fn asymmetric_readout_is_preserved() {
        let readout = ConfusionModel::from_fidelities([(0, 0.99, 0.92), (1, 0.99, 0.92)]).unwrap();
        let dev = DeviceModel::noiseless("pair", 2, vec![(0, 1)]).unwrap().with_readout(readout).unwrap();
        let plan = build_plan(&dev, &gate_set(&[GateLabel::Swap]), DEFAULT_SHOTS, &ReadoutPlan::PerQubit).unwrap();
        let calib = calibrate(&dev, &plan, &run_plan(&dev, &plan, 2).unwrap()).unwrap();
        let m = calib.confusion.qubit_matrix(0).unwrap();
        assert!(m[0][0] - m[1][1] > 0.04);
    }

    #[test]
    fn per_pair_readout_plan() {
        let mut joint = [[0.0; 4]; 4];
        for t in 0..4 {
            joint[t][t] = 0.95;
            joint[t ^ 3][t] = 0.05;
        }
        let readout = ConfusionModel::per_pair([((0, 1), joint)]).unwrap();
        let dev = DeviceModel::noiseless("pair", 2, vec![(0, 1)]).unwrap().with_readout(readout.clone()).unwrap();
        let plan = build_plan(&dev, &gate_set(&[GateLabel::Swap]), DEFAULT_SHOTS, &ReadoutPlan::PerPair(vec![(0, 1)])).unwrap();
        assert_eq!(plan.readout_scope(), ConfusionScope::PerPair);
        let calib = calibrate(&dev, &plan, &run_plan(&dev, &plan, 5).unwrap()).unwrap();
        assert!(calib.confusion.max_abs_diff(&readout).unwrap() < 0.015);
        assert!(calib.max_table_error(dev.ground_truth()).unwrap() < 0.02);
    }

    #[test]
    fn truncated_results_list_missing_experiments() {
        let dev = DeviceModel::noiseless("pair", 2, vec![(0, 1)]).unwrap();
        let plan = build_plan(&dev, &gate_set(&[GateLabel::Swap]), 100, &ReadoutPlan::PerQubit).unwrap();
        let mut records = run_plan(&dev, &plan, 1).unwrap();
        records.retain(|r| !(r.gate == GateLabel::Swap && r.prep == "10") && !(r.gate == GateLabel::Meas && r.pair == [1]));
        match calibrate(&dev, &plan, &records) {
            Err(CharacterizationError::Missing(m)) => assert_eq!(
                m,
                vec![
                    (GateLabel::Swap, vec![0, 1], "10".to_string()),
                    (GateLabel::Meas, vec![1], "0".to_string()),
                    (GateLabel::Meas, vec![1], "1".to_string()),
                ]
            ),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inferred_plan_matches_built_plan() {
        let dev = make_line_like(3, 1);
        let plan = build_plan(&dev, &default_gates(), 256, &ReadoutPlan::PerQubit).unwrap();
        let records = run_plan(&dev, &plan, 2).unwrap();
        assert_eq!(infer_plan(&dev, &records).unwrap(), plan);
        assert_eq!(infer_plan(&dev, &records[5..]).unwrap(), plan);
        let pair_plan = build_plan(&dev, &default_gates(), 256, &ReadoutPlan::PerPair(vec![(0, 1)])).unwrap();
        let records = run_plan(&dev, &pair_plan, 2).unwrap();
        assert_eq!(infer_plan(&dev, &records).unwrap(), pair_plan);
        assert_eq!(infer_plan(&dev, &[]), Err(CharacterizationError::NoGates));
    }

    #[test]
    fn calibration_is_deterministic() {
        let dev = make_line_like(3, 4);
        let plan = build_plan(&dev, &gate_set(&[GateLabel::Cnot12, GateLabel::Swap]), 1000, &ReadoutPlan::PerQubit).unwrap();
        let records = run_plan(&dev, &plan, 77).unwrap();
        assert_eq!(records, run_plan(&dev, &plan, 77).unwrap());
        assert_eq!(calibrate(&dev, &plan, &records).unwrap(), calibrate(&dev, &plan, &records).unwrap());
        let json = serde_json::to_string(&calibrate(&dev, &plan, &records).unwrap()).unwrap();
        let back: CalibrationSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, calibrate(&dev, &plan, &records).unwrap());
    }

    #[test]
    fn estimates_are_always_complete() {
        let dev = make_line_like(2, 9);
        let sampled = |prep: usize, seed: u64| {
            let e = Experiment { gate: GateLabel::Swap, pair: vec![1, 0], prep: bitstring(prep, 2), shots: 300 };
            let dist = measure_probs(&run_exact(&dev, &e.program()).unwrap(), dev.readout(), &[0, 1]).unwrap();
            sample_shots(&dist, 300, seed).unwrap()
        };
        let by_prep: BTreeMap<usize, ShotCounts> = (0..4).map(|j| (j, sampled(j, j as u64))).collect();
        let t = estimate_table(GateLabel::Swap, (1, 0), &by_prep, dev.readout()).unwrap();
        for j in 0..4 {
            let s: f64 = (0..4).map(|k| t.p()[k][j]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
