//! Per-agent local density filters fed by the consensus outputs, with
//! optional coupling through neighbor estimates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agents::AgentEnsemble;
use crate::consensus::{
    build_disk_graph, pi_consensus_step, positivity_correct, CommGraph, ConsensusGains, ConsensusNodeState,
};
use crate::error::{Error, Result};
use crate::filter::{filter_update, make_diag_cov, CovarianceMatrix};
use crate::grid::{GeneratorMatrix, GridSpec, ScalarField};
use crate::kde::{kernel_field, KernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFilterState {
    pub p_hat: ScalarField,
    pub cov: CovarianceMatrix,
    pub agent: usize,
}

impl LocalFilterState {
    pub fn new(agent: usize, p0: ScalarField, scale: f64) -> Self {
        let n = p0.values().len();
        Self {
            p_hat: p0,
            cov: CovarianceMatrix::scaled_projector(n, scale),
            agent,
        }
    }

    /// In-place version of [`local_filter_step`].
    pub fn step(
        &mut self,
        a: &GeneratorMatrix,
        y: &ScalarField,
        rinv: &[f64],
        neighbor_estimates: &[&ScalarField],
        theta: f64,
        dt: f64,
    ) -> Result<()> {
        if theta < 0.0 || !theta.is_finite() {
            return Err(Error::config("theta", format!("must be nonnegative, got {theta}")));
        }
        let disagreement = if theta != 0.0 && !neighbor_estimates.is_empty() {
            let own = self.p_hat.values();
            let mut d = vec![0.0; own.len()];
            for nb in neighbor_estimates {
                nb.same_grid(&self.p_hat)?;
                for ((acc, pj), pi) in d.iter_mut().zip(nb.values()).zip(own) {
                    *acc += pj - pi;
                }
            }
            Some(d)
        } else {
            None
        };
        let coupling = disagreement.as_deref().map(|d| (d, theta));
        filter_update(&mut self.p_hat, &mut self.cov, a, y, rinv, coupling, dt)
    }
}

/// `p̂_i ← Φ p̂_i + dt P_i [R_i⁻¹ (y_i − p̂_i) + θ Σ_j (p̂_j − p̂_i)]`, then the
/// Riccati step on `P_i`. With `theta = 0` this is the centralized step.
pub fn local_filter_step(
    state: &LocalFilterState,
    a: &GeneratorMatrix,
    y: &ScalarField,
    rinv: &[f64],
    neighbor_estimates: &[&ScalarField],
    theta: f64,
    dt: f64,
) -> Result<LocalFilterState> {
    let mut next = state.clone();
    next.step(a, y, rinv, neighbor_estimates, theta, dt)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphPolicy {
    Complete,
    /// Disk graph built once from the initial positions.
    Disk { radius: f64 },
    /// Disk graph rebuilt after every agent step.
    DynamicDisk { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedParams {
    pub kernel: KernelSpec,
    pub gains: ConsensusGains,
    pub theta: f64,
    /// Positivity constant of the consensus output correction.
    pub c: f64,
    pub kbar: f64,
    pub floor: f64,
    /// Initial covariance scale.
    pub p0_scale: f64,
    pub graph: GraphPolicy,
    /// Minimum consensus rounds per filter step; raised automatically when a
    /// round would be unstable on the current graph.
    pub consensus_rounds: usize,
}

/// Picks `tracked` agents to run full filters and, among them, the first
/// `report` (in a seed-determined random order) for reporting. The report
/// agents do not depend on `tracked`.
pub fn choose_agents(n: usize, tracked: usize, report: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if tracked == 0 || tracked > n {
        return Err(Error::config("tracked", format!("must be in 1..={n}, got {tracked}")));
    }
    if report == 0 || report > tracked {
        return Err(Error::config(
            "report_agents",
            format!("must be in 1..={tracked}, got {report}"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a9e7));
    let report_set: Vec<usize> = order[..report].to_vec();
    let mut tracked_set = order[..tracked].to_vec();
    tracked_set.sort_unstable();
    Ok((tracked_set, report_set))
}

/// Full state of a distributed run: the consensus layer for every agent and
/// local filters for a tracked subset.
#[derive(Debug, Clone)]
pub struct DistributedRunState {
    grid: GridSpec,
    params: DistributedParams,
    graph: CommGraph,
    consensus: Vec<ConsensusNodeState>,
    inputs: Vec<ScalarField>,
    outputs: Vec<ScalarField>,
    filters: Vec<LocalFilterState>,
    /// `slot[i]` is the position of agent `i` in `filters`.
    slot: Vec<Option<usize>>,
    t: f64,
}

impl DistributedRunState {
    /// Initializes `ψ_i = z_i`, `φ_i` uniform, `y_i` from the corrected `ψ_i`,
    /// and `p̂_i = y_i` for every tracked agent.
    pub fn new(ens: &AgentEnsemble, grid: GridSpec, params: DistributedParams, tracked: &[usize]) -> Result<Self> {
        let n = ens.len();
        if tracked.is_empty() {
            return Err(Error::config("tracked", "tracked subset must be nonempty"));
        }
        if params.theta != 0.0 && tracked.len() != n {
            return Err(Error::config("tracked", "coupling (theta > 0) requires tracking every agent"));
        }
        if params.consensus_rounds == 0 {
            return Err(Error::config("consensus_substeps", "must be at least 1"));
        }
        let mut slot = vec![None; n];
        for (k, &i) in tracked.iter().enumerate() {
            if i >= n || slot[i].is_some() {
                return Err(Error::config("tracked", format!("invalid or repeated agent index {i}")));
            }
            slot[i] = Some(k);
        }
        let graph = build_graph(&params.graph, ens)?;
        let inputs = kernel_inputs(ens, &params.kernel, &grid);
        let phi0 = ScalarField::uniform_density(grid);
        let consensus = inputs
            .iter()
            .map(|z| ConsensusNodeState::new(z.clone(), phi0.clone()))
            .collect::<Result<Vec<_>>>()?;
        let outputs = consensus
            .iter()
            .map(|s| positivity_correct(&s.psi, params.c))
            .collect::<Result<Vec<_>>>()?;
        let filters = tracked
            .iter()
            .map(|&i| LocalFilterState::new(i, outputs[i].clone(), params.p0_scale))
            .collect();
        Ok(Self {
            grid,
            params,
            graph,
            consensus,
            inputs,
            outputs,
            filters,
            slot,
            t: 0.0,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn consensus(&self) -> &[ConsensusNodeState] {
        &self.consensus
    }

    /// Kernel fields `z_i` of the current positions.
    pub fn inputs(&self) -> &[ScalarField] {
        &self.inputs
    }

    /// Corrected consensus outputs `y_i`.
    pub fn outputs(&self) -> &[ScalarField] {
        &self.outputs
    }

    pub fn filters(&self) -> &[LocalFilterState] {
        &self.filters
    }

    pub fn filter_of(&self, agent: usize) -> Option<&LocalFilterState> {
        self.slot.get(agent).copied().flatten().map(|k| &self.filters[k])
    }

    /// Consensus rounds used for the next step on the current graph.
    pub fn rounds(&self, dt: f64) -> usize {
        self.params
            .consensus_rounds
            .max(self.params.gains.rounds_for(&self.graph, dt))
    }

    /// Consensus rounds on the current inputs, the corrected outputs `y_i`,
    /// then local filter updates using those outputs and the neighbor
    /// estimates from before the step.
    pub fn step(&mut self, a: &GeneratorMatrix, dt: f64) -> Result<()> {
        let rounds = self.rounds(dt);
        let delta = dt / rounds as f64;
        for _ in 0..rounds {
            self.consensus = pi_consensus_step(&self.consensus, &self.inputs, &self.graph, &self.params.gains, delta)?;
        }
        self.outputs = self
            .consensus
            .iter()
            .map(|s| positivity_correct(&s.psi, self.params.c))
            .collect::<Result<Vec<_>>>()?;

        let theta = self.params.theta;
        let (kbar, floor) = (self.params.kbar, self.params.floor);
        let previous: Vec<ScalarField> = if theta != 0.0 {
            self.filters.iter().map(|f| f.p_hat.clone()).collect()
        } else {
            Vec::new()
        };
        let graph = &self.graph;
        let slot = &self.slot;
        let outputs = &self.outputs;
        self.filters.par_iter_mut().try_for_each(|f| -> Result<()> {
            let y = &outputs[f.agent];
            let rinv = make_diag_cov(y, kbar, floor)?.inverse();
            let neighbors: Vec<&ScalarField> = if theta != 0.0 {
                graph
                    .neighbors(f.agent)
                    .iter()
                    .filter_map(|&j| slot[j].map(|k| &previous[k]))
                    .collect()
            } else {
                Vec::new()
            };
            f.step(a, y, &rinv, &neighbors, theta, dt)
        })?;
        self.t += dt;
        Ok(())
    }

    /// Refreshes the kernel inputs (and the graph, if dynamic) after the
    /// agents have moved.
    pub fn observe(&mut self, ens: &AgentEnsemble) -> Result<()> {
        if ens.len() != self.consensus.len() {
            return Err(Error::config("agents", "ensemble size changed during the run"));
        }
        if let GraphPolicy::DynamicDisk { radius } = self.params.graph {
            self.graph = build_disk_graph(ens.positions(), radius)?;
        }
        self.inputs = kernel_inputs(ens, &self.params.kernel, &self.grid);
        Ok(())
    }
}

fn build_graph(policy: &GraphPolicy, ens: &AgentEnsemble) -> Result<CommGraph> {
    match *policy {
        GraphPolicy::Complete => Ok(CommGraph::complete(ens.len())),
        GraphPolicy::Disk { radius } | GraphPolicy::DynamicDisk { radius } => build_disk_graph(ens.positions(), radius),
    }
}

fn kernel_inputs(ens: &AgentEnsemble, kernel: &KernelSpec, grid: &GridSpec) -> Vec<ScalarField> {
    ens.positions()
        .par_iter()
        .map(|x| kernel_field(*x, kernel, grid))
        .collect()
}
