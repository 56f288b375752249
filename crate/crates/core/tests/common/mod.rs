//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use swaproute::noise::{GateLabel, TransitionTable};

pub type M = DMatrix<Complex64>;

/// Post-gate basis index of pair state `j` (`j = j1 + 2*j2`), written out
/// per gate instead of going through the library.
pub fn ideal_image(gate: GateLabel, j: usize) -> usize {
    let (j1, j2) = (j & 1, j >> 1);
    let (o1, o2) = match gate {
        GateLabel::Cnot12 => (j1, j2 ^ j1),
        GateLabel::Cnot21 => (j1 ^ j2, j2),
        GateLabel::Swap => (j2, j1),
        GateLabel::Ident | GateLabel::Meas => (j1, j2),
    };
    o1 | (o2 << 1)
}

/// `M[out][in] = p[out xor G(in)][G(in)]`.
pub fn markov_oracle(t: &TransitionTable) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for input in 0..4 {
        let g = ideal_image(t.gate(), input);
        for out in 0..4 {
            m[out][input] = t.p()[out ^ g][g];
        }
    }
    m
}

pub fn markov_apply(m: &[[f64; 4]; 4], d: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, row) in m.iter().enumerate() {
        out[o] = (0..4).map(|i| row[i] * d[i]).sum();
    }
    out
}

/// `sum_k E_k rho E_k^dagger`.
pub fn kraus_apply(kraus: &[M], rho: &M) -> M {
    let mut out = M::zeros(rho.nrows(), rho.ncols());
    for e in kraus {
        out += e * rho * e.adjoint();
    }
    out
}

/// `sum_k E_k^dagger E_k`.
pub fn completeness(kraus: &[M]) -> M {
    let d = kraus[0].nrows();
    let mut out = M::zeros(d, d);
    for e in kraus {
        out += e.adjoint() * e;
    }
    out
}

pub fn max_abs(m: &M) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn identity(d: usize) -> M {
    M::identity(d, d)
}

/// Every simple path from `s` to `t` by depth-first search.
pub fn simple_paths(adj: &BTreeMap<usize, Vec<usize>>, s: usize, t: usize) -> Vec<Vec<usize>> {
    fn go(adj: &BTreeMap<usize, Vec<usize>>, t: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let at = *path.last().unwrap();
        if at == t {
            out.push(path.clone());
            return;
        }
        for &n in adj.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
            if !path.contains(&n) {
                path.push(n);
                go(adj, t, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(adj, t, &mut vec![s], &mut out);
    out
}

/// Lowest `(cost, path)` by full enumeration; costs are summed hop by hop
/// in path order.
pub fn best_by_enumeration(
    adj: &BTreeMap<usize, Vec<usize>>,
    s: usize,
    t: usize,
    cost: impl Fn(&[usize]) -> Option<f64>,
) -> Option<(f64, Vec<usize>)> {
    simple_paths(adj, s, t)
        .into_iter()
        .filter_map(|p| cost(&p).filter(|c| c.is_finite()).map(|c| (c, p)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
}

/// Random connected-or-not undirected graph on `n` nodes.
pub fn random_graph<R: Rng>(n: usize, density: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                edges.push((a, b));
            }
        }
    }
    edges
}

pub fn adjacency(edges: &[(usize, usize)]) -> BTreeMap<usize, Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    for v in adj.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    adj
}

/// SWAP success for a pair distribution, from the raw table.
pub fn swap_success(t: &TransitionTable, d: &[f64; 4]) -> f64 {
    (0..4).map(|j| d[j] * t.p()[0][ideal_image(GateLabel::Swap, j)]).sum()
}

/// Moving bit lands on the far end; the next partner starts at 0.
pub fn next_dist(t: &TransitionTable, d: &[f64; 4]) -> [f64; 4] {
    let out = markov_apply(&markov_oracle(t), d);
    [out[0] + out[1], out[2] + out[3], 0.0, 0.0]
}
