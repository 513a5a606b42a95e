//! Orchestration of complete runs: reference, agents, observations, and
//! filters advanced in lockstep, with metrics and snapshots.
//!
//! Each step at `t_k = k dt` observes the agents, records metrics against the
//! reference, then advances the filters with the generator `A(t_k)`, the
//! reference, and finally the agents.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use crate::agents::init_uniform;
use crate::config::{RunConfig, RunMode};
use crate::distributed::{choose_agents, DistributedParams, DistributedRunState};
use crate::error::{Error, Result};
use crate::filter::{make_diag_cov, CentralFilterState};
use crate::grid::{assemble_generator, GridSpec, ScalarField};
use crate::kde::{kbar, kde_estimate};
use crate::metrics::{compute_metrics, consensus_tracking_error, input_variation, MetricsRecord};
use crate::model::{scenario_model, MixtureGradientModel, MixtureSpec};
use crate::output::RunWriter;
use crate::reference::ReferenceSolver;

/// Largest `|mass − 1|` seen per quantity over a run, and the smallest values
/// of the reference and of the consensus outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassDiagnostics {
    pub reference: f64,
    pub kde: f64,
    pub filter: f64,
    pub oracle: f64,
    pub psi: f64,
    pub phi: f64,
    pub y: f64,
    pub local: f64,
    pub reference_min: f64,
    pub y_min: f64,
}

impl Default for MassDiagnostics {
    fn default() -> Self {
        Self {
            reference: 0.0,
            kde: 0.0,
            filter: 0.0,
            oracle: 0.0,
            psi: 0.0,
            phi: 0.0,
            y: 0.0,
            local: 0.0,
            reference_min: f64::INFINITY,
            y_min: f64::INFINITY,
        }
    }
}

impl MassDiagnostics {
    /// The largest deviation across all tracked quantities.
    pub fn worst(&self) -> f64 {
        [
            self.reference,
            self.kde,
            self.filter,
            self.oracle,
            self.psi,
            self.phi,
            self.y,
            self.local,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn track(slot: &mut f64, f: &ScalarField) {
    *slot = slot.max((f.mass() - 1.0).abs());
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: Vec<MetricsRecord>,
    pub mass: MassDiagnostics,
    /// Steps at which the communication graph was disconnected.
    pub disconnected_steps: usize,
    /// Agents whose local filters are reported (distributed runs only).
    pub report_agents: Vec<usize>,
}

impl RunSummary {
    /// Mean of `metric` over the records of matching estimators with
    /// `t ≥ t_end / 2`.
    pub fn final_half_mean(&self, estimator: impl Fn(&str) -> bool, metric: impl Fn(&MetricsRecord) -> f64) -> Option<f64> {
        final_half_mean(&self.metrics, estimator, metric)
    }
}

pub fn final_half_mean(
    records: &[MetricsRecord],
    estimator: impl Fn(&str) -> bool,
    metric: impl Fn(&MetricsRecord) -> f64,
) -> Option<f64> {
    let t_end = records.iter().map(|r| r.t).fold(f64::NEG_INFINITY, f64::max);
    let picked: Vec<f64> = records
        .iter()
        .filter(|r| r.t >= 0.5 * t_end && estimator(&r.estimator))
        .map(metric)
        .collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

fn model_for(cfg: &RunConfig) -> Result<MixtureGradientModel> {
    scenario_model(MixtureSpec::spinning_pair(), cfg.noise)
}

fn snapshot_due(cfg: &RunConfig, k: usize) -> bool {
    k == 0 || k == cfg.steps || (cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0)
}

fn uniform_start(grid: GridSpec) -> ScalarField {
    ScalarField::uniform_density(grid)
}

/// Centralized filter (and, if configured, the optimal oracle) against the
/// reference on `central_grid`.
pub fn run_centralized(cfg: &RunConfig, writer: Option<&RunWriter>) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = cfg.central_grid()?;
    let model = model_for(cfg)?;
    let kernel = cfg.kernel()?;
    let k = kbar(cfg.agents, &kernel)?;
    let mut ens = init_uniform(cfg.agents, &grid, cfg.seed)?;
    let mut reference = ReferenceSolver::new(uniform_start(grid), &model)?;

    let y0 = kde_estimate(ens.positions(), &kernel, &grid)?;
    let mut filter = CentralFilterState::new(y0.clone(), k);
    let mut oracle = cfg.optimal_oracle.then(|| CentralFilterState::new(y0, k));

    let mut metrics = Vec::new();
    let mut mass = MassDiagnostics::default();
    for step in 0..=cfg.steps {
        let t = step as f64 * cfg.dt;
        let y = kde_estimate(ens.positions(), &kernel, &grid)?;
        let p = &reference.state().p;
        track(&mut mass.reference, p);
        track(&mut mass.kde, &y);
        track(&mut mass.filter, &filter.p_hat);
        mass.reference_min = mass.reference_min.min(p.min());
        metrics.push(compute_metrics(&y, p, t, "kde")?);
        metrics.push(compute_metrics(&filter.p_hat, p, t, "filter")?);
        if let Some(o) = &oracle {
            track(&mut mass.oracle, &o.p_hat);
            metrics.push(compute_metrics(&o.p_hat, p, t, "oracle")?);
        }
        if let Some(w) = writer {
            if snapshot_due(cfg, step) {
                w.snapshot("reference", step, p)?;
                w.snapshot("kde", step, &y)?;
                w.snapshot("filter", step, &filter.p_hat)?;
                if let Some(o) = &oracle {
                    w.snapshot("oracle", step, &o.p_hat)?;
                }
            }
        }
        if step == cfg.steps {
            break;
        }

        let a = assemble_generator(&grid, &model, t)?;
        let rinv = make_diag_cov(&y, k, cfg.floor)?.inverse();
        filter.step(&a, &y, &rinv, cfg.dt).map_err(|e| e.at_step(step))?;
        if let Some(o) = &mut oracle {
            let rinv_true = make_diag_cov(p, k, cfg.floor)?.inverse();
            o.step(&a, &y, &rinv_true, cfg.dt).map_err(|e| e.at_step(step))?;
        }
        reference.advance_with(&a, cfg.dt)?;
        ens.step(&model, t, cfg.dt)?;
    }
    if let Some(w) = writer {
        w.metrics(&metrics)?;
    }
    Ok(RunSummary {
        metrics,
        mass,
        disconnected_steps: 0,
        report_agents: Vec::new(),
    })
}

/// Centralized run with the oracle filter enabled.
pub fn run_optimal_oracle(cfg: &RunConfig, writer: Option<&RunWriter>) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    cfg.optimal_oracle = true;
    run_centralized(&cfg, writer)
}

/// Consensus layer for every agent plus local filters, on `distributed_grid`.
pub fn run_distributed(cfg: &RunConfig, writer: Option<&RunWriter>) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = cfg.distributed_grid()?;
    let model = model_for(cfg)?;
    let kernel = cfg.kernel()?;
    let k = kbar(cfg.agents, &kernel)?;
    let mut ens = init_uniform(cfg.agents, &grid, cfg.seed)?;
    let mut reference = ReferenceSolver::new(uniform_start(grid), &model)?;
    let tracked_count = if cfg.theta > 0.0 { cfg.agents } else { cfg.tracked };
    let (tracked, report) = choose_agents(cfg.agents, tracked_count, cfg.report_agents, cfg.seed)?;
    let params = DistributedParams {
        kernel,
        gains: cfg.gains()?,
        theta: cfg.theta,
        c: cfg.c,
        kbar: k,
        floor: cfg.floor,
        p0_scale: k,
        graph: cfg.graph_policy(),
        consensus_rounds: cfg.consensus_substeps,
    };
    let mut state = DistributedRunState::new(&ens, grid, params, &tracked)?;
    let names: Vec<String> = report.iter().map(|i| format!("local_{i}")).collect();

    let mut metrics = Vec::new();
    let mut mass = MassDiagnostics::default();
    let mut disconnected_steps = 0;
    let mut previous_inputs: Option<Vec<ScalarField>> = None;
    for step in 0..=cfg.steps {
        let t = step as f64 * cfg.dt;
        let y = kde_estimate(ens.positions(), &kernel, &grid)?;
        let p = &reference.state().p;
        track(&mut mass.reference, p);
        track(&mut mass.kde, &y);
        mass.reference_min = mass.reference_min.min(p.min());
        for s in state.consensus() {
            track(&mut mass.psi, &s.psi);
            track(&mut mass.phi, &s.phi);
        }
        for out in state.outputs() {
            track(&mut mass.y, out);
            mass.y_min = mass.y_min.min(out.min());
        }
        for f in state.filters() {
            track(&mut mass.local, &f.p_hat);
        }

        let connected = state.graph().is_connected();
        if !connected {
            disconnected_steps += 1;
        }
        let track_err = consensus_tracking_error(state.outputs(), &y)?;
        let variation = match &previous_inputs {
            Some(prev) => input_variation(state.inputs(), prev, cfg.dt)?,
            None => 0.0,
        };
        metrics.push(compute_metrics(&y, p, t, "kde")?);
        for (agent, name) in report.iter().zip(&names) {
            let f = state.filter_of(*agent).expect("report agents are tracked");
            metrics.push(compute_metrics(&f.p_hat, p, t, name)?.with_consensus(track_err, variation, connected));
        }
        if let Some(w) = writer {
            if snapshot_due(cfg, step) {
                w.snapshot("reference", step, p)?;
                w.snapshot("kde", step, &y)?;
                for (agent, name) in report.iter().zip(&names) {
                    w.snapshot(name, step, &state.filter_of(*agent).expect("tracked").p_hat)?;
                }
            }
        }
        if step == cfg.steps {
            break;
        }

        let a = assemble_generator(&grid, &model, t)?;
        state.step(&a, cfg.dt).map_err(|e| e.at_step(step))?;
        reference.advance_with(&a, cfg.dt)?;
        ens.step(&model, t, cfg.dt)?;
        previous_inputs = Some(state.inputs().to_vec());
        state.observe(&ens)?;
    }
    if let Some(w) = writer {
        w.metrics(&metrics)?;
    }
    Ok(RunSummary {
        metrics,
        mass,
        disconnected_steps,
        report_agents: report,
    })
}

/// Runs the configured modes, writing into `out_dir/centralized` and
/// `out_dir/distributed`.
pub fn run_scenario(cfg: &RunConfig) -> Result<Vec<(String, RunSummary)>> {
    cfg.validate()?;
    let mut out = Vec::new();
    if matches!(cfg.mode, RunMode::Centralized | RunMode::All) {
        let w = RunWriter::create(cfg.out_dir.join("centralized"), cfg.pgm)?;
        out.push(("centralized".to_string(), run_centralized(cfg, Some(&w))?));
    }
    if matches!(cfg.mode, RunMode::Distributed | RunMode::All) {
        let w = RunWriter::create(cfg.out_dir.join("distributed"), cfg.pgm)?;
        out.push(("distributed".to_string(), run_distributed(cfg, Some(&w))?));
    }
    Ok(out)
}

/// Loads a config file and runs it.
pub fn run_config_file(path: &Path) -> Result<Vec<(String, RunSummary)>> {
    run_scenario(&RunConfig::load(path)?)
}

/// Final-half-horizon averages of one centralized run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub filter_l2: f64,
    pub kde_l2: f64,
    pub filter_grad: f64,
    pub kde_grad: f64,
}

impl SweepRow {
    pub fn filter_wins(&self) -> bool {
        self.filter_l2 < self.kde_l2 && self.filter_grad < self.kde_grad
    }
}

pub fn sweep_row(seed: u64, summary: &RunSummary) -> Result<SweepRow> {
    let avg = |name: &str, grad: bool| {
        summary
            .final_half_mean(|e| e == name, |r| if grad { r.grad_l2_err } else { r.l2_err })
            .ok_or_else(|| Error::config("steps", "run recorded no metrics"))
    };
    Ok(SweepRow {
        seed,
        filter_l2: avg("filter", false)?,
        kde_l2: avg("kde", false)?,
        filter_grad: avg("filter", true)?,
        kde_grad: avg("kde", true)?,
    })
}

/// Centralized runs over a seed range; writes `out_dir/sweep.csv`.
pub fn sweep(cfg: &RunConfig, seeds: RangeInclusive<u64>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for seed in seeds {
        let mut run = cfg.clone();
        run.seed = seed;
        rows.push(sweep_row(seed, &run_centralized(&run, None)?)?);
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut w = BufWriter::new(File::create(cfg.out_dir.join("sweep.csv"))?);
    writeln!(w, "seed,filter_l2,kde_l2,filter_grad,kde_grad,filter_wins")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.seed,
            r.filter_l2,
            r.kde_l2,
            r.filter_grad,
            r.kde_grad,
            r.filter_wins()
        )?;
    }
    w.flush()?;
    Ok(rows)
}
