// Centralized filter against the raw kernel estimate on a coarse grid.
//
// ```bash
// cargo run --release --example central_filter
// ```

use density_filter::config::RunConfig;
use density_filter::scenario::{run_centralized, sweep_row, SweepRow};
use density_filter::Result;

pub fn run_example() -> Result<SweepRow> {
    let mut cfg = RunConfig::spinning_pair();
    cfg.central_grid = [20, 20];
    cfg.steps = 200;
    let summary = run_centralized(&cfg, None)?;
    let row = sweep_row(cfg.seed, &summary)?;
    println!("second half of {} s:", cfg.steps as f64 * cfg.dt);
    println!("  filter  L2 {:.4}  grad {:.3}", row.filter_l2, row.filter_grad);
    println!("  kde     L2 {:.4}  grad {:.3}", row.kde_l2, row.kde_grad);
    println!("  worst mass deviation {:.1e}", summary.mass.worst());
    Ok(row)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
