//! Run configuration: a JSON document with a fixed key set.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusGains;
use crate::distributed::GraphPolicy;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kde::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Centralized,
    Distributed,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Complete,
    Disk,
    DynamicDisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Only `"spinning_pair"` is built in.
    pub scenario: String,
    pub mode: RunMode,
    /// `[nx, ny]` of the centralized run.
    pub central_grid: [usize; 2],
    /// `[nx, ny]` of the distributed run.
    pub distributed_grid: [usize; 2],
    /// `[x_min, x_max, y_min, y_max]`.
    pub domain: [f64; 4],
    pub dt: f64,
    pub steps: usize,
    /// Field snapshots every this many steps (0: initial and final only).
    pub snapshot_every: usize,
    pub agents: usize,
    /// Noise level `D` of the agent dynamics.
    pub noise: f64,
    pub bandwidth: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub c: f64,
    pub floor: f64,
    pub consensus_substeps: usize,
    pub graph: GraphKind,
    pub radius: f64,
    pub seed: u64,
    /// Agents that run a full local filter (all of them when `theta > 0`).
    pub tracked: usize,
    pub report_agents: usize,
    /// Also run the filter whose observation covariance uses the true density.
    pub optimal_oracle: bool,
    pub pgm: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::spinning_pair()
    }
}

impl RunConfig {
    /// The two-component spinning mixture with 100 agents over 60 s.
    pub fn spinning_pair() -> Self {
        Self {
            scenario: "spinning_pair".into(),
            mode: RunMode::All,
            central_grid: [30, 30],
            distributed_grid: [20, 20],
            domain: [0.0, 1.0, 0.0, 1.0],
            dt: 0.1,
            steps: 600,
            snapshot_every: 50,
            agents: 100,
            noise: 0.03,
            bandwidth: 0.08,
            alpha: 0.2,
            a: 0.4,
            b: 0.04,
            theta: 0.0,
            c: 1e-4,
            floor: 1e-6,
            consensus_substeps: 1,
            graph: GraphKind::DynamicDisk,
            radius: 0.7,
            seed: 1,
            tracked: 5,
            report_agents: 5,
            optimal_oracle: false,
            pgm: false,
            out_dir: PathBuf::from("out"),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every precondition that can be decided before a run starts.
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        };
        if self.scenario != "spinning_pair" {
            return Err(Error::config(
                "scenario",
                format!("unknown scenario {:?} (expected \"spinning_pair\")", self.scenario),
            ));
        }
        self.central_grid()?;
        self.distributed_grid()?;
        positive("dt", self.dt)?;
        if self.agents == 0 {
            return Err(Error::config("agents", "need at least one agent"));
        }
        positive("noise", self.noise)?;
        positive("bandwidth", self.bandwidth)?;
        self.gains()?;
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(Error::config("theta", format!("must be nonnegative, got {}", self.theta)));
        }
        positive("c", self.c)?;
        positive("floor", self.floor)?;
        if self.consensus_substeps == 0 {
            return Err(Error::config("consensus_substeps", "must be at least 1"));
        }
        if self.graph != GraphKind::Complete {
            positive("radius", self.radius)?;
        }
        if self.tracked == 0 || self.tracked > self.agents {
            return Err(Error::config(
                "tracked",
                format!("must be in 1..={}, got {}", self.agents, self.tracked),
            ));
        }
        if self.theta > 0.0 && self.tracked != self.agents {
            return Err(Error::config("tracked", "coupling (theta > 0) requires tracking every agent"));
        }
        if self.report_agents == 0 || self.report_agents > self.tracked {
            return Err(Error::config(
                "report_agents",
                format!("must be in 1..={}, got {}", self.tracked, self.report_agents),
            ));
        }
        Ok(())
    }

    fn grid(&self, field: &str, cells: [usize; 2]) -> Result<GridSpec> {
        let [x0, x1, y0, y1] = self.domain;
        GridSpec::new(x0, x1, y0, y1, cells[0], cells[1]).map_err(|e| match e {
            Error::Config { reason, field: f } if f == "grid" => Error::config(field, reason),
            other => other,
        })
    }

    pub fn central_grid(&self) -> Result<GridSpec> {
        self.grid("central_grid", self.central_grid)
    }

    pub fn distributed_grid(&self) -> Result<GridSpec> {
        self.grid("distributed_grid", self.distributed_grid)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::gaussian(self.bandwidth)
    }

    pub fn gains(&self) -> Result<ConsensusGains> {
        ConsensusGains::new(self.alpha, self.a, self.b)
    }

    pub fn graph_policy(&self) -> GraphPolicy {
        match self.graph {
            GraphKind::Complete => GraphPolicy::Complete,
            GraphKind::Disk => GraphPolicy::Disk { radius: self.radius },
            GraphKind::DynamicDisk => GraphPolicy::DynamicDisk { radius: self.radius },
        }
    }
}
