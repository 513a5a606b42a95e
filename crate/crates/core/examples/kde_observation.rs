// Kernel density estimate of a swarm and the observation covariance the
// filters derive from it.
//
// ```bash
// cargo run --example kde_observation
// ```

use density_filter::agents::init_uniform;
use density_filter::filter::make_diag_cov;
use density_filter::grid::GridSpec;
use density_filter::kde::{kbar, kde_estimate, KernelSpec};
use density_filter::model::{scenario_model, MixtureSpec};
use density_filter::Result;

pub struct ObservationReport {
    pub kbar: f64,
    pub mass: f64,
    pub min_value: f64,
    pub max_variance: f64,
}

pub fn run_example() -> Result<ObservationReport> {
    let grid = GridSpec::unit(30, 30)?;
    let kernel = KernelSpec::gaussian(0.08)?;
    let model = scenario_model(MixtureSpec::spinning_pair(), 0.03)?;
    let mut swarm = init_uniform(100, &grid, 7)?;
    for k in 0..100 {
        swarm.step(&model, k as f64 * 0.1, 0.1)?;
    }

    let y = kde_estimate(swarm.positions(), &kernel, &grid)?;
    let k = kbar(swarm.len(), &kernel)?;
    let r = make_diag_cov(&y, k, 1e-6)?;
    let max_variance = r.entries().iter().cloned().fold(0.0, f64::max);
    println!("kbar = {k:.5}");
    println!("estimate: mass {:.12}, range [{:.3e}, {:.3}]", y.mass(), y.min(), y.max());
    println!("observation variance up to {max_variance:.4} (floor {})", r.floor());

    Ok(ObservationReport {
        kbar: k,
        mass: y.mass(),
        min_value: y.min(),
        max_variance,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
