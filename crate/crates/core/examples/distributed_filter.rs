// Every agent runs consensus on its own kernel estimate; a few of them also
// run a local filter on the consensus output.
//
// ```bash
// cargo run --release --example distributed_filter
// ```

use density_filter::config::RunConfig;
use density_filter::scenario::run_distributed;
use density_filter::Result;

pub struct DistributedReport {
    pub kde_l2: f64,
    pub local_l2: Vec<f64>,
    pub worst_mass_dev: f64,
    pub min_output: f64,
}

pub fn run_example() -> Result<DistributedReport> {
    let mut cfg = RunConfig::spinning_pair();
    cfg.distributed_grid = [12, 12];
    cfg.agents = 40;
    cfg.tracked = 3;
    cfg.report_agents = 3;
    cfg.steps = 150;
    let summary = run_distributed(&cfg, None)?;

    let avg = |name: &str| summary.final_half_mean(|e| e == name, |r| r.l2_err).unwrap_or(f64::NAN);
    let kde_l2 = avg("kde");
    let local_l2: Vec<f64> = summary.report_agents.iter().map(|i| avg(&format!("local_{i}"))).collect();
    println!("kde          L2 {kde_l2:.4}");
    for (i, e) in summary.report_agents.iter().zip(&local_l2) {
        println!("local filter {i:2}  L2 {e:.4}");
    }
    println!("graph disconnected at {} steps", summary.disconnected_steps);
    Ok(DistributedReport {
        kde_l2,
        local_l2,
        worst_mass_dev: summary.mass.worst(),
        min_output: summary.mass.y_min,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
