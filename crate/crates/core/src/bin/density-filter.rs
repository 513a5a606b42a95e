use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use density_filter::config::RunConfig;
use density_filter::scenario::{run_scenario, sweep};
use density_filter::Result;

#[derive(Parser)]
#[command(version, about = "Mean-field density filters for stochastic swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Centralized runs over a range of seeds.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        from: u64,
        #[arg(long, default_value_t = 10)]
        to: u64,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn load(&self, path: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = overrides.load(&config)?;
            for (name, summary) in run_scenario(&cfg)? {
                println!(
                    "{name}: {} metric rows, worst mass deviation {:.3e}, written to {}",
                    summary.metrics.len(),
                    summary.mass.worst(),
                    cfg.out_dir.join(&name).display()
                );
                if summary.disconnected_steps > 0 {
                    println!("{name}: graph disconnected at {} steps", summary.disconnected_steps);
                }
            }
        }
        Command::Validate { config } => {
            RunConfig::load(&config)?;
            println!("{}: ok", config.display());
        }
        Command::Sweep {
            config,
            from,
            to,
            overrides,
        } => {
            let cfg = overrides.load(&config)?;
            let rows = sweep(&cfg, from..=to)?;
            let wins = rows.iter().filter(|r| r.filter_wins()).count();
            for r in &rows {
                println!(
                    "seed {}: filter l2 {:.4} grad {:.4} | kde l2 {:.4} grad {:.4}",
                    r.seed, r.filter_l2, r.filter_grad, r.kde_l2, r.kde_grad
                );
            }
            println!("filter beats KDE on {wins} of {} seeds", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
