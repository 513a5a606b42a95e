// Proportional-integral consensus on a path of ten nodes, each holding a
// different bump; every node's estimate approaches the average.
//
// ```bash
// cargo run --example pi_consensus
// ```

use density_filter::consensus::{pi_consensus_step, positivity_correct, CommGraph, ConsensusGains, ConsensusNodeState};
use density_filter::grid::{l2_norm, GridSpec, ScalarField};
use density_filter::kde::{kernel_field, KernelSpec};
use density_filter::Result;

pub fn run_example() -> Result<Vec<f64>> {
    let grid = GridSpec::unit(12, 12)?;
    let kernel = KernelSpec::gaussian(0.15)?;
    let n = 10;
    let inputs: Vec<ScalarField> = (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            kernel_field([0.1 + 0.8 * s, 0.2 + 0.6 * s * s], &kernel, &grid)
        })
        .collect();
    let mut average = vec![0.0; grid.cell_count()];
    for z in &inputs {
        for (acc, v) in average.iter_mut().zip(z.values()) {
            *acc += v / n as f64;
        }
    }
    let average = ScalarField::new(grid, average)?;

    let graph = CommGraph::path(n);
    let gains = ConsensusGains::new(0.5, 4.0, 2.0)?;
    let dt = 0.1;
    let mut states = inputs
        .iter()
        .map(|z| ConsensusNodeState::new(z.clone(), ScalarField::uniform_density(grid)))
        .collect::<Result<Vec<_>>>()?;

    let mut history = Vec::new();
    for round in 0..=3000 {
        if round % 500 == 0 {
            let worst = states
                .iter()
                .map(|s| s.psi.sub(&average).map(|d| l2_norm(&d)))
                .try_fold(0.0f64, |m, e| e.map(|e| m.max(e)))?;
            println!("round {round:4}: worst L2 distance to the average {worst:.3e}");
            history.push(worst);
        }
        states = pi_consensus_step(&states, &inputs, &graph, &gains, dt)?;
    }
    let y = positivity_correct(&states[0].psi, 1e-4)?;
    println!("corrected output of node 0: mass {:.12}, min {:.3e}", y.mass(), y.min());
    Ok(history)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
