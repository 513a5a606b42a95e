// Writes a config file, runs it the way the CLI does, and reads the
// metrics table back.
//
// ```bash
// cargo run --example scenario_config
// ```

use density_filter::config::{RunConfig, RunMode};
use density_filter::output::read_metrics_csv;
use density_filter::scenario::run_config_file;
use density_filter::Result;

pub fn run_example() -> Result<usize> {
    let dir = std::env::temp_dir().join(format!("density-filter-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mut cfg = RunConfig::spinning_pair();
    cfg.mode = RunMode::Centralized;
    cfg.central_grid = [15, 15];
    cfg.steps = 20;
    cfg.snapshot_every = 10;
    cfg.pgm = true;
    cfg.out_dir = dir.join("out");
    let path = dir.join("run.json");
    std::fs::write(&path, cfg.to_json())?;

    run_config_file(&path)?;
    let run_dir = cfg.out_dir.join("centralized");
    let records = read_metrics_csv(&run_dir.join("metrics.csv"))?;
    let mut files: Vec<String> = std::fs::read_dir(&run_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    println!("{} metric rows; files: {}", records.len(), files.join(" "));
    std::fs::remove_dir_all(&dir)?;
    Ok(records.len())
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
