//! Error metrics of density estimates against the reference density.

use crate::error::{Error, Result};
use crate::grid::{gradient, l2_norm, ScalarField, VectorField2};

/// One row of the metrics table. Consensus fields are present only for
/// distributed estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub t: f64,
    pub estimator: String,
    pub l2_err: f64,
    pub grad_l2_err: f64,
    pub h1_err: f64,
    pub mass_dev: f64,
    pub min_val: f64,
    pub consensus_track_err: Option<f64>,
    pub input_variation: Option<f64>,
    pub connected: Option<bool>,
}

impl MetricsRecord {
    pub fn with_consensus(mut self, track_err: f64, input_variation: f64, connected: bool) -> Self {
        self.consensus_track_err = Some(track_err);
        self.input_variation = Some(input_variation);
        self.connected = Some(connected);
        self
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.l2_err, self.grad_l2_err, self.h1_err, self.mass_dev, self.min_val]
            .iter()
            .chain(self.consensus_track_err.iter())
            .chain(self.input_variation.iter())
            .all(|v| v.is_finite())
    }
}

/// L² and gradient-L² errors (same discrete gradient for both fields), their
/// sum, the mass deviation, and the minimum of `estimate`.
pub fn compute_metrics(estimate: &ScalarField, truth: &ScalarField, t: f64, estimator: &str) -> Result<MetricsRecord> {
    let diff = estimate.sub(truth)?;
    let ge = gradient(estimate);
    let gt = gradient(truth);
    let grad_diff = VectorField2::new(ge.x.sub(&gt.x)?, ge.y.sub(&gt.y)?)?;
    let l2_err = l2_norm(&diff);
    let grad_l2_err = grad_diff.l2();
    Ok(MetricsRecord {
        t,
        estimator: estimator.to_string(),
        l2_err,
        grad_l2_err,
        h1_err: l2_err + grad_l2_err,
        mass_dev: (estimate.mass() - 1.0).abs(),
        min_val: estimate.min(),
        consensus_track_err: None,
        input_variation: None,
        connected: None,
    })
}

/// `max_i ‖y_i − y‖_{L²}`.
pub fn consensus_tracking_error(outputs: &[ScalarField], global: &ScalarField) -> Result<f64> {
    outputs
        .iter()
        .map(|y| y.sub(global).map(|d| l2_norm(&d)))
        .try_fold(0.0, |acc, e| e.map(|e| f64::max(acc, e)))
}

/// Root-sum-square L² norm of the disagreement part of `ż ≈ (z − z_prev)/dt`,
/// i.e. after subtracting the agent-mean rate.
pub fn input_variation(now: &[ScalarField], prev: &[ScalarField], dt: f64) -> Result<f64> {
    if now.len() != prev.len() {
        return Err(Error::config("agents", "input snapshots differ in agent count"));
    }
    if now.is_empty() {
        return Ok(0.0);
    }
    if !(dt > 0.0) {
        return Err(Error::config("dt", format!("must be positive, got {dt}")));
    }
    let rates = now
        .iter()
        .zip(prev)
        .map(|(a, b)| a.sub(b).map(|d| d.scaled(1.0 / dt)))
        .collect::<Result<Vec<_>>>()?;
    let m = rates[0].values().len();
    let mut mean = vec![0.0; m];
    for r in &rates {
        for (acc, v) in mean.iter_mut().zip(r.values()) {
            *acc += v;
        }
    }
    let inv = 1.0 / rates.len() as f64;
    mean.iter_mut().for_each(|v| *v *= inv);
    let area = rates[0].grid().cell_area();
    let total: f64 = rates
        .iter()
        .map(|r| r.values().iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>() * area)
        .sum();
    Ok(total.sqrt())
}
