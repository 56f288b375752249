//! Noise-aware SWAP routing: edge weights from calibrated SWAP channels,
//! label-setting shortest paths and fidelity prediction.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::characterize::CalibrationSet;
use crate::device::{execute, ChannelSource, DeviceModel, Program};
use crate::error::{RouteError, StateError};
use crate::noise::{GateLabel, MarkovMatrix};
use crate::qstate::{fidelity, DensityMatrix, PureState, MAX_QUBITS, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    StateIndependent,
    #[default]
    StateDependent,
}

/// What is being routed: the classical pair `(b0, b1)` with `b0` on the
/// source and `b1` on the first hop's far end, or an explicit single-qubit
/// state on the source with the far end in `|0>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutedState {
    Bits(u8, u8),
    Qubit([Complex64; 2]),
}

impl RoutedState {
    pub fn bits(label: &str) -> Option<Self> {
        match label {
            "00" => Some(RoutedState::Bits(0, 0)),
            "01" => Some(RoutedState::Bits(0, 1)),
            "10" => Some(RoutedState::Bits(1, 0)),
            "11" => Some(RoutedState::Bits(1, 1)),
            _ => None,
        }
    }

    /// Classical distribution of the first hop's pair, index `j1 + 2*j2`.
    pub fn initial_distribution(&self) -> [f64; 4] {
        match *self {
            RoutedState::Bits(b0, b1) => {
                let mut d = [0.0; 4];
                d[b0 as usize + 2 * b1 as usize] = 1.0;
                d
            }
            RoutedState::Qubit([a, b]) => {
                let norm = a.norm_sqr() + b.norm_sqr();
                [a.norm_sqr() / norm, b.norm_sqr() / norm, 0.0, 0.0]
            }
        }
    }

    fn validate(&self) -> Result<(), RouteError> {
        match *self {
            RoutedState::Bits(b0, b1) if b0 > 1 || b1 > 1 => {
                Err(RouteError::BadRoute(format!("bits ({b0}, {b1}) are not binary")))
            }
            RoutedState::Qubit([a, b]) if (a.norm_sqr() + b.norm_sqr() - 1.0).abs() > 1e-9 => {
                Err(StateError::NotNormalized((a.norm_sqr() + b.norm_sqr()).sqrt()).into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub source: usize,
    pub destination: usize,
    pub state: RoutedState,
    #[serde(default)]
    pub mode: WeightMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub pair: (usize, usize),
    pub weight: f64,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub predicted_fidelity: f64,
    pub total_weight: f64,
    pub per_hop: Vec<Hop>,
}

impl Route {
    /// Route along `path` with no cost information yet.
    pub fn along(path: Vec<usize>) -> Result<Self, RouteError> {
        if path.len() < 2 {
            return Err(RouteError::BadRoute("a route needs at least one hop".into()));
        }
        let distinct: BTreeSet<_> = path.iter().collect();
        if distinct.len() != path.len() {
            return Err(RouteError::BadRoute(format!("path {path:?} revisits a qubit")));
        }
        let pairs = path.windows(2).map(|w| (w[0], w[1])).collect();
        Ok(Self { path, pairs, predicted_fidelity: f64::NAN, total_weight: f64::NAN, per_hop: Vec::new() })
    }

    pub fn hops(&self) -> usize {
        self.pairs.len()
    }

    pub fn check(&self, device: &DeviceModel) -> Result<(), RouteError> {
        let fresh = Route::along(self.path.clone())?;
        if fresh.pairs != self.pairs {
            return Err(RouteError::BadRoute("pairs do not follow the path".into()));
        }
        for &(a, b) in &self.pairs {
            for q in [a, b] {
                if q >= device.n_qubits() {
                    return Err(RouteError::UnknownQubit(q));
                }
            }
            if !device.is_connected(a, b) {
                return Err(RouteError::BadRoute(format!("({a}, {b}) is not connected")));
            }
        }
        Ok(())
    }
}

fn swap_markov(calib: &CalibrationSet, pair: (usize, usize)) -> Result<MarkovMatrix, RouteError> {
    calib
        .tables
        .markov_matrix(GateLabel::Swap, pair, calib.swap_model)
        .ok_or(RouteError::MissingCalibration(pair.0, pair.1))
}

fn success_of(m: &MarkovMatrix, dist: &[f64; 4]) -> f64 {
    (0..4)
        .map(|j| dist[j] * m.entry(GateLabel::Swap.classical_action(j), j))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// `(-ln s, s)` with `s` the probability that `pair`'s SWAP leaves
/// `state_dist` in its ideal image.
pub fn edge_weight(calib: &CalibrationSet, pair: (usize, usize), state_dist: &[f64; 4]) -> Result<(f64, f64), RouteError> {
    let s = success_of(&swap_markov(calib, pair)?, state_dist);
    Ok((-s.ln(), s))
}

pub const UNIFORM: [f64; 4] = [0.25; 4];

/// Distribution of the next hop's pair: the moving bit, now on the far
/// end, becomes the first element and the next qubit holds 0.
pub fn next_distribution(m: &MarkovMatrix, dist: &[f64; 4]) -> [f64; 4] {
    let out = m.apply(dist);
    [out[0] + out[1], out[2] + out[3], 0.0, 0.0]
}

#[derive(Debug, Clone)]
struct Label<S> {
    cost: f64,
    path: Vec<usize>,
    hops: Vec<Hop>,
    state: S,
}

impl<S> PartialEq for Label<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S> Eq for Label<S> {}

impl<S> PartialOrd for Label<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S> Ord for Label<S> {
    // reversed so the max-heap pops the smallest (cost, path)
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.path.cmp(&self.path))
    }
}

/// Best-first search over simple paths ordered by `(cost, path)`. `step`
/// returns the hop and successor state, or `None` to forbid the edge.
/// With `settle` a node is closed at its first pop, which is exact when
/// `step` ignores the state.
pub fn label_setting<S: Clone>(
    source: usize,
    target: usize,
    neighbors: impl Fn(usize) -> Vec<usize>,
    init: S,
    step: impl Fn(&S, usize, usize) -> Option<(Hop, S)>,
    settle: bool,
) -> Option<(Vec<usize>, f64, Vec<Hop>)> {
    let mut heap = BinaryHeap::new();
    let mut closed = BTreeSet::new();
    heap.push(Label { cost: 0.0, path: vec![source], hops: Vec::new(), state: init });
    while let Some(label) = heap.pop() {
        let at = *label.path.last().expect("non-empty");
        if at == target {
            return Some((label.path, label.cost, label.hops));
        }
        if settle && !closed.insert(at) {
            continue;
        }
        for next in neighbors(at) {
            if label.path.contains(&next) || (settle && closed.contains(&next)) {
                continue;
            }
            let Some((hop, state)) = step(&label.state, at, next) else { continue };
            if !hop.weight.is_finite() {
                continue;
            }
            let mut path = label.path.clone();
            path.push(next);
            let mut hops = label.hops.clone();
            hops.push(hop);
            heap.push(Label { cost: label.cost + hop.weight, path, hops, state });
        }
    }
    None
}

/// Directed graph with fixed nonnegative weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    weights: BTreeMap<(usize, usize), f64>,
}

impl WeightedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        self.weights.insert((a, b), w);
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.weights.get(&(a, b)).copied()
    }

    pub fn neighbors(&self, a: usize) -> Vec<usize> {
        self.weights.range((a, 0)..=(a, usize::MAX)).map(|(&(_, b), _)| b).collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }

    /// Lowest-cost path, ties broken by the lexicographically smallest path.
    pub fn shortest_path(&self, source: usize, target: usize) -> Option<(Vec<usize>, f64)> {
        label_setting(
            source,
            target,
            |v| self.neighbors(v),
            (),
            |_, a, b| self.weight(a, b).map(|w| (Hop { pair: (a, b), weight: w, success: (-w).exp() }, ())),
            true,
        )
        .map(|(p, c, _)| (p, c))
    }
}

fn check_request(device: &DeviceModel, request: &RouteRequest) -> Result<(), RouteError> {
    if request.source == request.destination {
        return Err(RouteError::SameEndpoints(request.source));
    }
    for q in [request.source, request.destination] {
        if q >= device.n_qubits() || device.neighbors(q).is_empty() {
            return Err(RouteError::UnknownQubit(q));
        }
    }
    request.state.validate()
}

/// Minimum-weight route; SWAP pairs without calibration are not used.
pub fn shortest_route(device: &DeviceModel, calib: &CalibrationSet, request: &RouteRequest) -> Result<Route, RouteError> {
    check_request(device, request)?;
    let mut markov: BTreeMap<(usize, usize), MarkovMatrix> = BTreeMap::new();
    for &(a, b) in device.edges() {
        for pair in [(a, b), (b, a)] {
            if let Ok(m) = swap_markov(calib, pair) {
                markov.insert(pair, m);
            }
        }
    }
    let neighbors = |v: usize| device.neighbors(v);
    let found = match request.mode {
        WeightMode::StateIndependent => label_setting(
            request.source,
            request.destination,
            neighbors,
            (),
            |_, a, b| {
                let m = markov.get(&(a, b))?;
                let s = success_of(m, &UNIFORM);
                Some((Hop { pair: (a, b), weight: -s.ln(), success: s }, ()))
            },
            true,
        ),
        WeightMode::StateDependent => label_setting(
            request.source,
            request.destination,
            neighbors,
            request.state.initial_distribution(),
            |dist, a, b| {
                let m = markov.get(&(a, b))?;
                let s = success_of(m, dist);
                Some((Hop { pair: (a, b), weight: -s.ln(), success: s }, next_distribution(m, dist)))
            },
            false,
        ),
    };
    let (path, cost, hops) = found.ok_or(RouteError::Unreachable(request.source, request.destination))?;
    let mut route = Route::along(path)?;
    route.total_weight = cost;
    route.per_hop = hops;
    let n = route.hops();
    route.predicted_fidelity = predict_fidelity(calib, &route, &request.state, n)?;
    Ok(route)
}

/// SWAP pairs for `n_hops` hops: along the route, then back (reversed
/// pairs), and so on.
pub fn hop_schedule(route: &Route, n_hops: usize) -> Vec<(usize, usize)> {
    let forward = &route.pairs;
    let len = forward.len();
    (0..n_hops)
        .map(|i| {
            let lap = i / len;
            let k = i % len;
            if lap % 2 == 0 {
                forward[k]
            } else {
                let (a, b) = forward[len - 1 - k];
                (b, a)
            }
        })
        .collect()
}

/// Preparations on every path qubit, `n_hops` SWAPs separated by
/// barriers, then measurement.
pub fn synthesize_program(route: &Route, bits: (u8, u8), n_hops: usize) -> Program {
    let mut p = Program::default();
    for (i, &q) in route.path.iter().enumerate() {
        let bit = match i {
            0 => bits.0,
            1 => bits.1,
            _ => 0,
        };
        p = p.prepare(q, bit);
    }
    for (i, pair) in hop_schedule(route, n_hops).into_iter().enumerate() {
        if i > 0 {
            p = p.barrier();
        }
        p = p.gate(GateLabel::Swap, pair);
    }
    p.barrier().measure()
}

fn sorted_register(route: &Route) -> Result<Vec<usize>, RouteError> {
    let mut register = route.path.clone();
    register.sort_unstable();
    if register.len() > MAX_QUBITS {
        return Err(StateError::RegisterSize(register.len()).into());
    }
    Ok(register)
}

/// Initial and ideal final states over the sorted path register.
pub fn routed_states(route: &Route, state: &RoutedState, n_hops: usize) -> Result<(PureState, PureState), RouteError> {
    let register = sorted_register(route)?;
    let n = register.len();
    let local = |q: usize| register.iter().position(|&r| r == q).expect("path qubit");
    let mut factors = vec![[Complex64::new(1.0, 0.0), ZERO]; n];
    let one = [ZERO, Complex64::new(1.0, 0.0)];
    match *state {
        RoutedState::Bits(b0, b1) => {
            if b0 == 1 {
                factors[local(route.path[0])] = one;
            }
            if b1 == 1 {
                factors[local(route.path[1])] = one;
            }
        }
        RoutedState::Qubit(amps) => factors[local(route.path[0])] = amps,
    }
    let initial = PureState::product(&factors)?;
    for (a, b) in hop_schedule(route, n_hops) {
        factors.swap(local(a), local(b));
    }
    Ok((initial, PureState::product(&factors)?))
}

/// Fidelity of the routed register after `n_hops` calibrated SWAPs against
/// the ideal routed state.
pub fn predict_fidelity(calib: &CalibrationSet, route: &Route, state: &RoutedState, n_hops: usize) -> Result<f64, RouteError> {
    predict_with(calib, route, state, n_hops)
}

/// [`predict_fidelity`] for any channel source. Classical inputs on paths
/// longer than the dense-register limit go through [`classical_fidelity`].
pub fn predict_with<S: ChannelSource + ?Sized>(
    source: &S,
    route: &Route,
    state: &RoutedState,
    n_hops: usize,
) -> Result<f64, RouteError> {
    if let RoutedState::Bits(b0, b1) = *state {
        if route.path.len() > MAX_QUBITS {
            return classical_fidelity(source, route, (b0, b1), n_hops);
        }
    }
    Ok(fidelity(&routed_states(route, state, n_hops)?.1, &predicted_state(source, route, state, n_hops)?)?.clamp(0.0, 1.0))
}

pub const MAX_CLASSICAL_PATH: usize = 20;

/// Fidelity of a classical input from the register's bitstring
/// distribution: binary noise keeps diagonal states diagonal, so the
/// fidelity is the square root of the ideal outcome's probability.
pub fn classical_fidelity<S: ChannelSource + ?Sized>(
    source: &S,
    route: &Route,
    bits: (u8, u8),
    n_hops: usize,
) -> Result<f64, RouteError> {
    Route::along(route.path.clone())?;
    RoutedState::Bits(bits.0, bits.1).validate()?;
    let n = route.path.len();
    if n > MAX_CLASSICAL_PATH {
        return Err(StateError::RegisterSize(n).into());
    }
    let mut register = route.path.clone();
    register.sort_unstable();
    let local = |q: usize| register.iter().position(|&r| r == q).expect("path qubit");
    let mut start = 0usize;
    start |= (bits.0 as usize) << local(route.path[0]);
    start |= (bits.1 as usize) << local(route.path[1]);
    let mut ideal = start;
    let mut dist = vec![0.0; 1 << n];
    dist[start] = 1.0;
    for (a, b) in hop_schedule(route, n_hops) {
        let m = source
            .pair_channel(GateLabel::Swap, (a, b))
            .ok_or(RouteError::MissingCalibration(a, b))?
            .markov_matrix();
        let (la, lb) = (local(a), local(b));
        let mask = (1 << la) | (1 << lb);
        let mut next = vec![0.0; dist.len()];
        for (y, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let j = ((y >> la) & 1) | (((y >> lb) & 1) << 1);
            let rest = y & !mask;
            for o in 0..4 {
                next[rest | ((o & 1) << la) | ((o >> 1) << lb)] += m.entry(o, j) * p;
            }
        }
        dist = next;
        let j = ((ideal >> la) & 1) | (((ideal >> lb) & 1) << 1);
        let g = GateLabel::Swap.classical_action(j);
        ideal = (ideal & !mask) | ((g & 1) << la) | ((g >> 1) << lb);
    }
    Ok(dist[ideal].max(0.0).sqrt().min(1.0))
}

/// Register state after `n_hops` SWAPs drawn from `source`.
pub fn predicted_state<S: ChannelSource + ?Sized>(
    source: &S,
    route: &Route,
    state: &RoutedState,
    n_hops: usize,
) -> Result<DensityMatrix, RouteError> {
    Route::along(route.path.clone())?;
    state.validate()?;
    let register = sorted_register(route)?;
    let schedule = hop_schedule(route, n_hops);
    for &(a, b) in &schedule {
        if source.pair_channel(GateLabel::Swap, (a, b)).is_none() {
            return Err(RouteError::MissingCalibration(a, b));
        }
    }
    let mut program = Program::default();
    for pair in schedule {
        program = program.gate(GateLabel::Swap, pair);
    }
    let (initial, _) = routed_states(route, state, n_hops)?;
    Ok(execute(source, &program, &register, &initial.to_density())?)
}
