//! Proportional-integral dynamic average consensus over grid fields.
//!
//! Each node `i` keeps two fields, `ψ_i` (its running estimate of the
//! network-average input) and `φ_i` (the integral state), and exchanges both
//! with its graph neighbors once per round. Rounds are synchronous: every
//! node reads the previous round's neighbor states.

use crate::error::{Error, Result};
use crate::grid::{l1_norm, ScalarField};
use crate::model::Vec2;

/// Undirected communication graph stored as sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    neighbors: Vec<Vec<usize>>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl CommGraph {
    /// Graph from an undirected edge list; self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::config("graph", format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if i != j {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for list in neighbors.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn complete(n: usize) -> Self {
        Self {
            neighbors: (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
        }
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are in range")
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Union-find connectivity check.
    pub fn is_connected(&self) -> bool {
        let n = self.neighbors.len();
        if n <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, 0);
        (1..n).all(|i| find(&mut parent, i) == root)
    }
}

/// Links every pair of agents at distance at most `radius`.
pub fn build_disk_graph(positions: &[Vec2], radius: f64) -> Result<CommGraph> {
    if !(radius > 0.0) {
        return Err(Error::config("radius", format!("must be positive, got {radius}")));
    }
    let n = positions.len();
    let r2 = radius * radius;
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let d2 = (positions[i][0] - positions[j][0]).powi(2) + (positions[i][1] - positions[j][1]).powi(2);
            if d2 <= r2 {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    for list in neighbors.iter_mut() {
        list.sort_unstable();
    }
    Ok(CommGraph { neighbors })
}

/// Gains of the PI estimator: input gain `alpha`, proportional edge gain `a`,
/// integral edge gain `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusGains {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

impl ConsensusGains {
    pub fn new(alpha: f64, a: f64, b: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("a", a), ("b", b)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self { alpha, a, b })
    }

    /// `dt (alpha + a · max_degree)`; rounds are rejected unless this is below 2.
    pub fn stability_number(&self, graph: &CommGraph, dt: f64) -> f64 {
        dt * (self.alpha + self.a * graph.max_degree() as f64)
    }

    /// Rounds per interval `dt` so that each round satisfies the sharper
    /// bound `δ (alpha + 2 a · max_degree) ≤ 1.8`, using that the graph
    /// Laplacian's spectrum lies in `[0, 2 · max_degree]`.
    pub fn rounds_for(&self, graph: &CommGraph, dt: f64) -> usize {
        let rate = self.alpha + 2.0 * self.a * graph.max_degree() as f64;
        ((dt * rate / 1.8).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusNodeState {
    pub psi: ScalarField,
    pub phi: ScalarField,
}

impl ConsensusNodeState {
    /// `ψ(0) = z(0)`, `φ(0) = φ₀`.
    pub fn new(z0: ScalarField, phi0: ScalarField) -> Result<Self> {
        z0.same_grid(&phi0)?;
        Ok(Self { psi: z0, phi: phi0 })
    }
}

/// One synchronous round of
///
/// ```text
/// ψ_i ← ψ_i + dt [−α(ψ_i − z_i) − a Σ_j (ψ_i − ψ_j) + b Σ_j (φ_i − φ_j)]
/// φ_i ← φ_i − dt b Σ_j (ψ_i − ψ_j)
/// ```
pub fn pi_consensus_step(
    states: &[ConsensusNodeState],
    inputs: &[ScalarField],
    graph: &CommGraph,
    gains: &ConsensusGains,
    dt: f64,
) -> Result<Vec<ConsensusNodeState>> {
    let n = states.len();
    if inputs.len() != n || graph.node_count() != n {
        return Err(Error::config("graph", "states, inputs, and graph disagree on node count"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let number = gains.stability_number(graph, dt);
    if !(dt > 0.0) || number >= 2.0 {
        return Err(Error::config(
            "dt",
            format!("consensus round with dt = {dt} is unstable: dt·(alpha + a·max_degree) = {number} ≥ 2"),
        ));
    }
    let grid = *states[0].psi.grid();
    for (s, z) in states.iter().zip(inputs) {
        s.psi.same_grid(z)?;
        s.phi.same_grid(z)?;
        if *z.grid() != grid {
            return Err(Error::GridMismatch);
        }
    }

    let m = grid.cell_count();
    let mut out = Vec::with_capacity(n);
    let mut dpsi = vec![0.0; m];
    let mut dphi = vec![0.0; m];
    let mut dpsi_nbr = vec![0.0; m];
    for i in 0..n {
        let psi = states[i].psi.values();
        let phi = states[i].phi.values();
        let z = inputs[i].values();
        dpsi_nbr.iter_mut().for_each(|v| *v = 0.0);
        dphi.iter_mut().for_each(|v| *v = 0.0);
        for &j in graph.neighbors(i) {
            let psi_j = states[j].psi.values();
            let phi_j = states[j].phi.values();
            for c in 0..m {
                dpsi_nbr[c] += psi[c] - psi_j[c];
                dphi[c] += phi[c] - phi_j[c];
            }
        }
        for c in 0..m {
            dpsi[c] = -gains.alpha * (psi[c] - z[c]) - gains.a * dpsi_nbr[c] + gains.b * dphi[c];
        }
        let new_psi = psi.iter().zip(&dpsi).map(|(p, d)| p + dt * d).collect();
        let new_phi = phi
            .iter()
            .zip(&dpsi_nbr)
            .map(|(p, d)| p - dt * gains.b * d)
            .collect();
        out.push(ConsensusNodeState {
            psi: ScalarField::from_raw(grid, new_psi),
            phi: ScalarField::from_raw(grid, new_phi),
        });
    }
    Ok(out)
}

/// Shifts `psi` up so its minimum is at least `c` and rescales to unit L¹
/// norm. Inputs already bounded below by `c` are only rescaled.
pub fn positivity_correct(psi: &ScalarField, c: f64) -> Result<ScalarField> {
    if !(c > 0.0) {
        return Err(Error::config("c", format!("must be positive, got {c}")));
    }
    let min = psi.min();
    let shift = if min < c { (c - min).abs() } else { 0.0 };
    let shifted: Vec<f64> = psi.values().iter().map(|v| v + shift).collect();
    let shifted = ScalarField::from_raw(*psi.grid(), shifted);
    let norm = l1_norm(&shifted);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateField(format!("cannot normalize field with L1 norm {norm}")));
    }
    Ok(shifted.scaled(1.0 / norm))
}
