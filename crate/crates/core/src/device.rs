//! Synthetic noisy device: topology, ground-truth channels, readout and a
//! program executor.
//!
//! Only the qubits a program touches are simulated; unaddressed qubits stay
//! in `|0>` and never interact, so they are left out of the dense register.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DeviceError, StateError};
use crate::measurement::{measure_probs, sample_shots, ConfusionModel, Distribution, ShotCounts};
use crate::noise::{GateLabel, PairChannel, SwapModel, TableSet, TransitionTable};
use crate::qstate::{CMatrix, DensityMatrix, MAX_QUBITS, ONE};

/// Anything that can hand out the noisy channel for a gate on a pair.
pub trait ChannelSource {
    fn pair_channel(&self, gate: GateLabel, pair: (usize, usize)) -> Option<PairChannel>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeviceRepr", into = "DeviceRepr")]
pub struct DeviceModel {
    name: String,
    n_qubits: usize,
    edges: Vec<(usize, usize)>,
    ground_truth: TableSet,
    readout: ConfusionModel,
    swap_model: SwapModel,
}

#[derive(Serialize, Deserialize)]
struct DeviceRepr {
    name: String,
    n_qubits: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    swap_model: SwapModel,
    ground_truth: TableSet,
    readout: ConfusionModel,
}

impl TryFrom<DeviceRepr> for DeviceModel {
    type Error = DeviceError;

    fn try_from(r: DeviceRepr) -> Result<Self, Self::Error> {
        let mut d = DeviceModel::new(r.name, r.n_qubits, r.edges.into_iter().map(|e| (e[0], e[1])).collect(), r.readout)?;
        d.swap_model = r.swap_model;
        for t in r.ground_truth.iter() {
            d.insert_table(t.clone())?;
        }
        Ok(d)
    }
}

impl From<DeviceModel> for DeviceRepr {
    fn from(d: DeviceModel) -> Self {
        DeviceRepr {
            name: d.name,
            n_qubits: d.n_qubits,
            edges: d.edges.into_iter().map(|(a, b)| [a, b]).collect(),
            swap_model: d.swap_model,
            ground_truth: d.ground_truth,
            readout: d.readout,
        }
    }
}

impl DeviceModel {
    /// Device without ground-truth tables; add them with [`DeviceModel::insert_table`].
    pub fn new(
        name: impl Into<String>,
        n_qubits: usize,
        edges: Vec<(usize, usize)>,
        readout: ConfusionModel,
    ) -> Result<Self, DeviceError> {
        if n_qubits == 0 {
            return Err(DeviceError::InvalidDevice("device has no qubits".into()));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &edges {
            for q in [a, b] {
                if q >= n_qubits {
                    return Err(DeviceError::QubitOutOfRange { qubit: q, n_qubits });
                }
            }
            if a == b {
                return Err(DeviceError::InvalidDevice(format!("self-loop on qubit {a}")));
            }
            if !seen.insert((a, b)) {
                return Err(DeviceError::InvalidDevice(format!("edge ({a}, {b}) listed twice")));
            }
        }
        if let Some(&q) = readout.covered_qubits().iter().find(|&&q| q >= n_qubits) {
            return Err(DeviceError::QubitOutOfRange { qubit: q, n_qubits });
        }
        Ok(Self {
            name: name.into(),
            n_qubits,
            edges,
            ground_truth: TableSet::new(),
            readout,
            swap_model: SwapModel::Table,
        })
    }

    /// Every edge gets noiseless CNOT tables in both directions plus
    /// noiseless SWAP and IDENT tables; readout is perfect.
    pub fn noiseless(name: impl Into<String>, n_qubits: usize, edges: Vec<(usize, usize)>) -> Result<Self, DeviceError> {
        let mut d = Self::new(name, n_qubits, edges, ConfusionModel::perfect(0..n_qubits))?;
        for (a, b) in d.undirected_pairs() {
            for gate in [GateLabel::Cnot12, GateLabel::Cnot21, GateLabel::Swap, GateLabel::Ident] {
                d.insert_table(TransitionTable::noiseless(gate, (a, b)))?;
            }
        }
        Ok(d)
    }

    pub fn insert_table(&mut self, table: TransitionTable) -> Result<(), DeviceError> {
        let (a, b) = table.pair();
        if !self.is_connected(a, b) {
            return Err(DeviceError::InvalidDevice(format!(
                "ground-truth {} table on ({a}, {b}) is not on an edge",
                table.gate()
            )));
        }
        self.ground_truth.insert(table);
        Ok(())
    }

    pub fn with_swap_model(mut self, swap_model: SwapModel) -> Self {
        self.swap_model = swap_model;
        self
    }

    pub fn with_readout(mut self, readout: ConfusionModel) -> Result<Self, DeviceError> {
        if let Some(&q) = readout.covered_qubits().iter().find(|&&q| q >= self.n_qubits) {
            return Err(DeviceError::QubitOutOfRange { qubit: q, n_qubits: self.n_qubits });
        }
        self.readout = readout;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn ground_truth(&self) -> &TableSet {
        &self.ground_truth
    }

    pub fn readout(&self) -> &ConfusionModel {
        &self.readout
    }

    pub fn swap_model(&self) -> SwapModel {
        self.swap_model
    }

    /// Pairs are connected when either direction is an edge.
    pub fn is_connected(&self, a: usize, b: usize) -> bool {
        self.edges.iter().any(|&e| e == (a, b) || e == (b, a))
    }

    /// Connected pairs as `(min, max)`, sorted.
    pub fn undirected_pairs(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<(usize, usize)> = self.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        set.into_iter().collect()
    }

    pub fn neighbors(&self, q: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| if a == q { Some(b) } else if b == q { Some(a) } else { None })
            .collect();
        set.into_iter().collect()
    }

    /// Checks qubit ranges and connectivity of every instruction.
    pub fn check_program(&self, program: &Program) -> Result<(), DeviceError> {
        program.validate()?;
        for (index, inst) in program.instructions().iter().enumerate() {
            match *inst {
                Instruction::Prepare { qubit, .. } if qubit >= self.n_qubits => {
                    return Err(DeviceError::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
                }
                Instruction::Gate { pair: (a, b), .. } => {
                    for q in [a, b] {
                        if q >= self.n_qubits {
                            return Err(DeviceError::QubitOutOfRange { qubit: q, n_qubits: self.n_qubits });
                        }
                    }
                    if !self.is_connected(a, b) {
                        return Err(DeviceError::NotConnected { index, a, b });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl ChannelSource for DeviceModel {
    fn pair_channel(&self, gate: GateLabel, pair: (usize, usize)) -> Option<PairChannel> {
        self.ground_truth.channel(gate, pair, self.swap_model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Instruction {
    Prepare { qubit: usize, bit: u8 },
    Gate { gate: GateLabel, pair: (usize, usize) },
    Barrier,
    Measure,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::Prepare { qubit, bit } => write!(f, "prepare q{qubit} {bit}"),
            Instruction::Gate { gate, pair: (a, b) } => match gate {
                GateLabel::Cnot12 => write!(f, "cnot q{a} q{b}"),
                GateLabel::Cnot21 => write!(f, "cnot21 q{a} q{b}"),
                GateLabel::Swap => write!(f, "swap q{a} q{b}"),
                GateLabel::Ident => write!(f, "ident q{a} q{b}"),
                GateLabel::Meas => write!(f, "meas q{a} q{b}"),
            },
            Instruction::Barrier => write!(f, "barrier"),
            Instruction::Measure => write!(f, "measure"),
        }
    }
}

/// Ordered instruction list. Serialized as a bare JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Program {
    instructions: Vec<Instruction>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        Self { instructions }
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn push(&mut self, inst: Instruction) {
        self.instructions.push(inst);
    }

    pub fn prepare(mut self, qubit: usize, bit: u8) -> Self {
        self.push(Instruction::Prepare { qubit, bit });
        self
    }

    pub fn gate(mut self, gate: GateLabel, pair: (usize, usize)) -> Self {
        self.push(Instruction::Gate { gate, pair });
        self
    }

    pub fn barrier(mut self) -> Self {
        self.push(Instruction::Barrier);
        self
    }

    pub fn measure(mut self) -> Self {
        self.push(Instruction::Measure);
        self
    }

    pub fn ends_in_measure(&self) -> bool {
        matches!(self.instructions.last(), Some(Instruction::Measure))
    }

    pub fn gate_count(&self) -> usize {
        self.instructions.iter().filter(|i| matches!(i, Instruction::Gate { .. })).count()
    }

    /// Sorted qubits touched by any instruction.
    pub fn register(&self) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for inst in &self.instructions {
            match *inst {
                Instruction::Prepare { qubit, .. } => {
                    set.insert(qubit);
                }
                Instruction::Gate { pair: (a, b), .. } => {
                    set.insert(a);
                    set.insert(b);
                }
                _ => {}
            }
        }
        set.into_iter().collect()
    }

    /// Device-independent checks: preparations first, nothing after the
    /// measurement, distinct gate targets.
    pub fn validate(&self) -> Result<(), DeviceError> {
        let mut seen_gate = false;
        for (index, inst) in self.instructions.iter().enumerate() {
            let bad = |reason: &str| DeviceError::BadInstruction { index, reason: reason.to_string() };
            match *inst {
                Instruction::Prepare { bit, .. } => {
                    if bit > 1 {
                        return Err(bad("prepared bit must be 0 or 1"));
                    }
                    if seen_gate {
                        return Err(bad("preparation after a gate"));
                    }
                }
                Instruction::Gate { gate, pair: (a, b) } => {
                    if gate == GateLabel::Meas {
                        return Err(bad("MEAS is not an executable gate"));
                    }
                    if a == b {
                        return Err(bad("gate addresses the same qubit twice"));
                    }
                    seen_gate = true;
                }
                Instruction::Barrier => {}
                Instruction::Measure => {
                    if index + 1 != self.instructions.len() {
                        return Err(bad("instructions after measure"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.instructions.iter().map(|i| format!("{i}\n")).collect()
    }
}

fn parse_qubit(tok: &str) -> Option<usize> {
    tok.strip_prefix('q').unwrap_or(tok).parse().ok()
}

impl FromStr for Program {
    type Err = DeviceError;

    /// One instruction per line: `prepare q0 1`, `cnot q0 q1` (control
    /// first), `cnot21 q0 q1` (control second), `swap q1 q2`, `ident q0 q1`,
    /// `barrier`, `measure`. `#` starts a comment.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut program = Program::default();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| DeviceError::Parse { line: i + 1, reason };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let qubits = |n: usize| -> Result<Vec<usize>, DeviceError> {
                if toks.len() != n + 1 {
                    return Err(err(format!("{} expects {n} operands", toks[0])));
                }
                toks[1..]
                    .iter()
                    .map(|t| parse_qubit(t).ok_or_else(|| err(format!("bad qubit {t:?}"))))
                    .collect()
            };
            let inst = match toks[0].to_ascii_lowercase().as_str() {
                "prepare" => {
                    if toks.len() != 3 {
                        return Err(err("prepare expects a qubit and a bit".into()));
                    }
                    let qubit = parse_qubit(toks[1]).ok_or_else(|| err(format!("bad qubit {:?}", toks[1])))?;
                    let bit = match toks[2] {
                        "0" => 0,
                        "1" => 1,
                        other => return Err(err(format!("bad bit {other:?}"))),
                    };
                    Instruction::Prepare { qubit, bit }
                }
                "cnot" | "cx" | "cnot12" => {
                    let q = qubits(2)?;
                    Instruction::Gate { gate: GateLabel::Cnot12, pair: (q[0], q[1]) }
                }
                "cnot21" => {
                    let q = qubits(2)?;
                    Instruction::Gate { gate: GateLabel::Cnot21, pair: (q[0], q[1]) }
                }
                "swap" => {
                    let q = qubits(2)?;
                    Instruction::Gate { gate: GateLabel::Swap, pair: (q[0], q[1]) }
                }
                "ident" | "id" => {
                    let q = qubits(2)?;
                    Instruction::Gate { gate: GateLabel::Ident, pair: (q[0], q[1]) }
                }
                "barrier" => {
                    qubits(0)?;
                    Instruction::Barrier
                }
                "measure" => {
                    qubits(0)?;
                    Instruction::Measure
                }
                other => return Err(err(format!("unknown instruction {other:?}"))),
            };
            program.push(inst);
        }
        program.validate()?;
        Ok(program)
    }
}

impl Program {
    /// Accepts either the JSON array form or the line-oriented text form.
    pub fn parse_any(s: &str) -> Result<Self, DeviceError> {
        if s.trim_start().starts_with('[') {
            let p: Program =
                serde_json::from_str(s).map_err(|e| DeviceError::Parse { line: e.line(), reason: e.to_string() })?;
            p.validate()?;
            Ok(p)
        } else {
            s.parse()
        }
    }
}

fn reset_ops(bit: u8) -> [CMatrix; 2] {
    let b = bit as usize;
    let mut k0 = CMatrix::zeros(2, 2);
    let mut k1 = CMatrix::zeros(2, 2);
    k0[(b, 0)] = ONE;
    k1[(b, 1)] = ONE;
    [k0, k1]
}

/// Runs `program` from an arbitrary initial state over `register`
/// (device qubit `register[i]` is local qubit `i`). Preparations are ideal
/// resets; barriers and the final measurement do not touch the state.
pub fn execute<S: ChannelSource + ?Sized>(
    source: &S,
    program: &Program,
    register: &[usize],
    initial: &DensityMatrix,
) -> Result<DensityMatrix, DeviceError> {
    if register.len() != initial.n_qubits() {
        return Err(StateError::DimensionMismatch { left: register.len(), right: initial.n_qubits() }.into());
    }
    program.validate()?;
    let local = |index: usize, q: usize| {
        register.iter().position(|&r| r == q).ok_or_else(|| DeviceError::BadInstruction {
            index,
            reason: format!("qubit {q} is outside the simulated register"),
        })
    };
    let mut cache: BTreeMap<(GateLabel, (usize, usize)), PairChannel> = BTreeMap::new();
    let mut m = initial.matrix().clone();
    for (index, inst) in program.instructions().iter().enumerate() {
        match *inst {
            Instruction::Prepare { qubit, bit } => {
                let t = [local(index, qubit)?];
                let [k0, k1] = reset_ops(bit);
                m = crate::qstate::conjugate_local(&m, &k0, &t) + crate::qstate::conjugate_local(&m, &k1, &t);
            }
            Instruction::Gate { gate, pair } => {
                let targets = (local(index, pair.0)?, local(index, pair.1)?);
                if !cache.contains_key(&(gate, pair)) {
                    let ch = source
                        .pair_channel(gate, pair)
                        .ok_or(DeviceError::MissingChannel { gate, a: pair.0, b: pair.1 })?;
                    cache.insert((gate, pair), ch);
                }
                m = cache[&(gate, pair)].apply_matrix(&m, targets);
            }
            Instruction::Barrier | Instruction::Measure => {}
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(register.len(), m)?)
}

fn ground_state(register: &[usize]) -> Result<DensityMatrix, DeviceError> {
    if register.is_empty() {
        return Err(DeviceError::EmptyRegister);
    }
    if register.len() > MAX_QUBITS {
        return Err(DeviceError::RegisterTooLarge(register.len()));
    }
    Ok(DensityMatrix::basis(register.len(), 0)?)
}

/// Final state over `program.register()`, starting from all zeros.
pub fn run_exact(device: &DeviceModel, program: &Program) -> Result<DensityMatrix, DeviceError> {
    device.check_program(program)?;
    let register = program.register();
    execute(device, program, &register, &ground_state(&register)?)
}

/// Final state over `register` (which must contain every touched qubit).
pub fn run_from(
    device: &DeviceModel,
    program: &Program,
    register: &[usize],
    initial: &DensityMatrix,
) -> Result<DensityMatrix, DeviceError> {
    device.check_program(program)?;
    execute(device, program, register, initial)
}

/// Outcome distribution of a measured program after readout noise.
pub fn exact_distribution(device: &DeviceModel, program: &Program) -> Result<Distribution, DeviceError> {
    if !program.ends_in_measure() {
        return Err(DeviceError::NoMeasure);
    }
    let rho = run_exact(device, program)?;
    Ok(measure_probs(&rho, device.readout(), &program.register())?)
}

pub fn run_shots(device: &DeviceModel, program: &Program, shots: u64, seed: u64) -> Result<ShotCounts, DeviceError> {
    let dist = exact_distribution(device, program)?;
    Ok(sample_shots(&dist, shots, seed)?)
}

/// Directed edges of the 20-qubit hexagonal lattice: rows `0..5`, `5..10`,
/// `10..15`, `15..20` joined by seven vertical couplings, each coupling
/// usable in both directions.
pub fn boeblingen_edges() -> Vec<(usize, usize)> {
    let mut undirected = Vec::new();
    for row in 0..4 {
        for i in 0..4 {
            undirected.push((5 * row + i, 5 * row + i + 1));
        }
    }
    undirected.extend([(1, 6), (3, 8), (5, 10), (7, 12), (9, 14), (11, 16), (13, 18)]);
    undirected.sort_unstable();
    undirected.into_iter().flat_map(|(a, b)| [(a, b), (b, a)]).collect()
}

/// Both directions of `0-1-...-(n-1)`.
pub fn line_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n.saturating_sub(1)).flat_map(|i| [(i, i + 1), (i + 1, i)]).collect()
}

pub const MIN_COLUMN_ERROR: f64 = 0.005;
pub const MAX_COLUMN_ERROR: f64 = 0.05;

/// Table whose per-column error mass grows with the number of 1-bits in
/// the post-gate state: each excited qubit adds its own decay term, so the
/// `11` column carries the sum of the two single-excitation columns.
pub fn decay_biased_table<R: Rng + ?Sized>(gate: GateLabel, pair: (usize, usize), rng: &mut R) -> TransitionTable {
    let mut draws: Vec<f64> = (0..3).map(|_| rng.random_range(MIN_COLUMN_ERROR..=MAX_COLUMN_ERROR)).collect();
    draws.sort_by(f64::total_cmp);
    let (first, second) = if rng.random::<bool>() { (1, 2) } else { (2, 1) };
    let mut err = [0.0; 4];
    err[0] = draws[0];
    err[first] = 2.0 * draws[1];
    err[second] = 2.0 * draws[2];
    err[3] = err[1] + err[2];
    let mut p = [[0.0; 4]; 4];
    for j in 0..4 {
        let w = [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0), 0.25 * rng.random_range(0.2..1.0)];
        let total: f64 = w.iter().sum();
        p[0][j] = 1.0 - err[j];
        for k in 1..4 {
            p[k][j] = err[j] * w[k - 1] / total;
        }
    }
    TransitionTable::new(gate, pair, crate::noise::renormalized(p)).expect("columns are stochastic")
}

/// Per-qubit readout with `P(1|1) < P(0|0)`.
pub fn decay_biased_readout<R: Rng + ?Sized>(qubits: impl IntoIterator<Item = usize>, rng: &mut R) -> ConfusionModel {
    ConfusionModel::from_fidelities(qubits.into_iter().map(|q| {
        let p00 = rng.random_range(0.97..0.995);
        let p11 = p00 - rng.random_range(0.02..0.06);
        (q, p00, p11)
    }))
    .expect("fidelities are probabilities")
}

fn decay_biased_device(name: String, n: usize, edges: Vec<(usize, usize)>, seed: u64) -> DeviceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let readout = decay_biased_readout(0..n, &mut rng);
    let mut d = DeviceModel::new(name, n, edges, readout).expect("fixture topology is valid");
    let directed = d.edges.clone();
    for (a, b) in directed {
        let t = decay_biased_table(GateLabel::Cnot12, (a, b), &mut rng);
        d.insert_table(t).expect("edge exists");
    }
    for (a, b) in d.undirected_pairs() {
        let t = decay_biased_table(GateLabel::Swap, (a, b), &mut rng);
        d.insert_table(t).expect("edge exists");
    }
    d
}

/// 20-qubit hexagonal device with decay-biased ground truth: one CNOT table
/// per directed edge, one SWAP table per coupling.
///
/// Routing `0-1-2-3-4` on seed 7 gives the `00` series above every other
/// input and `11` below. Hardware reference values for the same experiment,
/// not reproduced here: `00` from 0.854 (N=1) to 0.800 (N=8), `11` from
/// 0.697 to 0.446.
pub fn make_boeblingen_like(seed: u64) -> DeviceModel {
    decay_biased_device(format!("boeblingen-like-{seed}"), 20, boeblingen_edges(), seed)
}

/// `n`-qubit line with the same decay-biased ground truth.
pub fn make_line_like(n: usize, seed: u64) -> DeviceModel {
    decay_biased_device(format!("line{n}-{seed}"), n, line_edges(n), seed)
}

/// Four qubits, two routes from 0 to 3: `0-1-3` has a uniform error
/// rate, `0-2-3` is better on average and on all-zero pairs but worse once a 1 is
/// moving through it.
pub fn make_two_path_fixture() -> DeviceModel {
    let edges = vec![(0, 1), (1, 0), (1, 3), (3, 1), (0, 2), (2, 0), (2, 3), (3, 2)];
    let mut d = DeviceModel::new("two-path", 4, edges, ConfusionModel::perfect(0..4)).expect("valid fixture");
    let flat = |pair| {
        TransitionTable::state_independent(GateLabel::Swap, pair, [0.96, 0.02, 0.02, 0.0]).expect("valid")
    };
    let skewed = |pair| {
        let mut p = [[0.0; 4]; 4];
        for (j, err) in [0.001, 0.06, 0.06, 0.03].into_iter().enumerate() {
            p[0][j] = 1.0 - err;
            p[1][j] = err / 2.0;
            p[2][j] = err / 2.0;
        }
        TransitionTable::new(GateLabel::Swap, pair, p).expect("valid")
    };
    d.insert_table(flat((0, 1))).expect("edge");
    d.insert_table(flat((1, 3))).expect("edge");
    d.insert_table(skewed((0, 2))).expect("edge");
    d.insert_table(skewed((2, 3))).expect("edge");
    for (a, b) in d.undirected_pairs() {
        for gate in [GateLabel::Cnot12, GateLabel::Cnot21] {
            d.insert_table(TransitionTable::noiseless(gate, (a, b))).expect("edge");
        }
    }
    d
}
