use thiserror::Error;

use crate::noise::GateLabel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("register size {0} outside supported range 1..={max}", max = crate::qstate::MAX_QUBITS)]
    RegisterSize(usize),
    #[error("expected {expected} amplitudes/rows, got {got}")]
    Length { expected: usize, got: usize },
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("trace {0} differs from 1")]
    BadTrace(f64),
    #[error("eigenvalue {0:e} below the PSD floor")]
    NotPositive(f64),
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid qubit selection: {0}")]
    BadQubits(String),
    #[error("invalid Pauli label {0:?}")]
    BadPauli(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("table entry p[{k}][{j}] = {value} outside [0, 1]")]
    EntryOutOfRange { k: usize, j: usize, value: f64 },
    #[error("table column {j} sums to {sum}, expected 1")]
    Incomplete { j: usize, sum: f64 },
    #[error("Kraus set is not complete (max deviation {0:e})")]
    NotComplete(f64),
    #[error("gate {0:?} has no unitary action")]
    NoUnitary(GateLabel),
    #[error("expected {expected:?} channel, got {got:?}")]
    GateDirectionMismatch { expected: GateLabel, got: GateLabel },
    #[error("channels act on different pairs: {0:?} vs {1:?}")]
    PairMismatch((usize, usize), (usize, usize)),
    #[error("pair ({0}, {0}) addresses the same qubit twice")]
    DegeneratePair(usize),
    #[error("unknown table convention {0:?}")]
    Convention(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("distribution is invalid: {0}")]
    InvalidDistribution(String),
    #[error("confusion matrix invalid: {0}")]
    InvalidConfusion(String),
    #[error("confusion model does not cover qubit(s) {0:?}")]
    ScopeMismatch(Vec<usize>),
    #[error("confusion matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("missing readout preparations: {0:?}")]
    MissingPreparations(Vec<(Vec<usize>, String)>),
    #[error("shot counts invalid: {0}")]
    InvalidCounts(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit device")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("instruction {index}: pair ({a}, {b}) is not connected")]
    NotConnected { index: usize, a: usize, b: usize },
    #[error("instruction {index}: {reason}")]
    BadInstruction { index: usize, reason: String },
    #[error("no ground-truth channel for {gate:?} on ({a}, {b})")]
    MissingChannel { gate: GateLabel, a: usize, b: usize },
    #[error("program must end in a measure instruction")]
    NoMeasure,
    #[error("program addresses no qubits")]
    EmptyRegister,
    #[error("active register of {0} qubits exceeds the dense-simulation cap")]
    RegisterTooLarge(usize),
    #[error("device invalid: {0}")]
    InvalidDevice(String),
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharacterizationError {
    #[error("device topology has no edges")]
    EmptyTopology,
    #[error("no gates selected for characterization")]
    NoGates,
    #[error("gate {0:?} cannot be characterized as a pair gate")]
    UnsupportedGate(GateLabel),
    #[error("missing experiments: {}", format_missing(.0))]
    Missing(Vec<(GateLabel, Vec<usize>, String)>),
    #[error("corrected probability {value} for {gate:?} on {pair:?} (prep {prep}) is below -0.05")]
    ModelMismatch { gate: GateLabel, pair: (usize, usize), prep: usize, value: f64 },
    #[error("record {0}: {1}")]
    BadRecord(usize, String),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

fn format_missing(missing: &[(GateLabel, Vec<usize>, String)]) -> String {
    missing
        .iter()
        .map(|(g, q, p)| format!("{}{:?}/{}", g.as_str(), q, p))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error("tomography supports 1..=5 qubits, got {0}")]
    QubitCount(usize),
    #[error("missing measurement setting {0}")]
    MissingSetting(String),
    #[error("measurement setting {0} appears twice")]
    DuplicateSetting(String),
    #[error("counts for setting {setting} cover {got} bits, expected {expected}")]
    WidthMismatch { setting: String, expected: usize, got: usize },
    #[error("expectation table has {got} entries, expected {expected}")]
    IncompleteLabels { expected: usize, got: usize },
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("source and destination are both qubit {0}")]
    SameEndpoints(usize),
    #[error("qubit {0} is not in the topology")]
    UnknownQubit(usize),
    #[error("no route from {0} to {1}")]
    Unreachable(usize, usize),
    #[error("no SWAP calibration for pair ({0}, {1})")]
    MissingCalibration(usize, usize),
    #[error("route is empty or malformed: {0}")]
    BadRoute(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {reason}")]
pub struct FormatError {
    pub line: usize,
    pub reason: String,
}
