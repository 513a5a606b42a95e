//! Drift and diffusion models for the agent dynamics.
//!
//! Every model implements [`DriftDiffusion`], which is consumed both by the
//! agent simulator (drift and noise matrix) and by the generator assembly
//! (drift and diffusion tensor `Σ = σσᵀ/2`).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Drift `v(x, t)` and noise matrix `σ(x, t)` of an Itô diffusion in the plane.
pub trait DriftDiffusion: Sync {
    fn drift(&self, x: Vec2, t: f64) -> Vec2;

    fn noise(&self, x: Vec2, t: f64) -> Mat2;

    /// Diffusion tensor `Σ = σσᵀ/2`.
    fn diffusion(&self, x: Vec2, t: f64) -> Mat2 {
        let s = self.noise(x, t);
        let mut out = [[0.0; 2]; 2];
        for (j, row) in out.iter_mut().enumerate() {
            for (k, entry) in row.iter_mut().enumerate() {
                *entry = 0.5 * (s[j][0] * s[k][0] + s[j][1] * s[k][1]);
            }
        }
        out
    }

    /// True when neither drift nor noise depend on time, so a generator
    /// assembled once can be reused.
    fn is_autonomous(&self) -> bool {
        false
    }
}

/// A mixture component mean moving on a circle: `c + r (cos(ωt + φ), sin(ωt + φ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularMean {
    pub center: Vec2,
    pub radius: f64,
    pub angular_rate: f64,
    pub phase: f64,
}

impl CircularMean {
    pub fn fixed(at: Vec2) -> Self {
        Self {
            center: at,
            radius: 0.0,
            angular_rate: 0.0,
            phase: 0.0,
        }
    }

    pub fn at(&self, t: f64) -> Vec2 {
        let angle = self.angular_rate * t + self.phase;
        [
            self.center[0] + self.radius * angle.cos(),
            self.center[1] + self.radius * angle.sin(),
        ]
    }
}

/// Gaussian mixture with a shared covariance and time-varying means.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub means: Vec<CircularMean>,
    pub covariance: Mat2,
    pub weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(means: Vec<CircularMean>, covariance: Mat2, weights: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() {
            return Err(Error::Model(
                "mixture needs one weight per component and at least one component".into(),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Model("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("mixture weights sum to {total}, not 1")));
        }
        let c = covariance;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if !(c[0][0] > 0.0 && det > 0.0) || (c[0][1] - c[1][0]).abs() > 1e-15 {
            return Err(Error::Model("mixture covariance must be SPD".into()));
        }
        Ok(Self {
            means,
            covariance,
            weights,
        })
    }

    /// Two equally weighted components with covariance `diag(0.02, 0.02)`
    /// spinning at 0.04 rad/s on a circle of radius 0.3 about (0.5, 0.5),
    /// half a turn apart.
    pub fn spinning_pair() -> Self {
        let orbit = |phase| CircularMean {
            center: [0.5, 0.5],
            radius: 0.3,
            angular_rate: 0.04,
            phase,
        };
        Self::new(
            vec![orbit(0.0), orbit(PI)],
            [[0.02, 0.0], [0.0, 0.02]],
            vec![0.5, 0.5],
        )
        .expect("spinning pair is a valid mixture")
    }

    fn precision(&self) -> (Mat2, f64) {
        let c = self.covariance;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let inv = [
            [c[1][1] / det, -c[0][1] / det],
            [-c[1][0] / det, c[0][0] / det],
        ];
        (inv, det)
    }

    /// Mixture density `f(x, t)`.
    pub fn density(&self, x: Vec2, t: f64) -> f64 {
        let (inv, det) = self.precision();
        let norm = 1.0 / (2.0 * PI * det.sqrt());
        self.means
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| {
                let mu = m.at(t);
                let d = [x[0] - mu[0], x[1] - mu[1]];
                w * norm * (-0.5 * quad(&inv, d)).exp()
            })
            .sum()
    }

    /// `∇ log f(x, t)`, evaluated with log-sum-exp weights so it stays finite
    /// far from every component.
    pub fn grad_log_density(&self, x: Vec2, t: f64) -> Vec2 {
        let (inv, _) = self.precision();
        let mut logs = Vec::with_capacity(self.means.len());
        let mut scores = Vec::with_capacity(self.means.len());
        for (m, w) in self.means.iter().zip(&self.weights) {
            let mu = m.at(t);
            let d = [x[0] - mu[0], x[1] - mu[1]];
            logs.push(if *w > 0.0 {
                w.ln() - 0.5 * quad(&inv, d)
            } else {
                f64::NEG_INFINITY
            });
            scores.push([
                -(inv[0][0] * d[0] + inv[0][1] * d[1]),
                -(inv[1][0] * d[0] + inv[1][1] * d[1]),
            ]);
        }
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let mut g = [0.0; 2];
        for (l, s) in logs.iter().zip(&scores) {
            let r = (l - top).exp();
            total += r;
            g[0] += r * s[0];
            g[1] += r * s[1];
        }
        [g[0] / total, g[1] / total]
    }
}

fn quad(m: &Mat2, d: Vec2) -> f64 {
    d[0] * (m[0][0] * d[0] + m[0][1] * d[1]) + d[1] * (m[1][0] * d[0] + m[1][1] * d[1])
}

/// Samples the analytic mixture at cell centers. Not renormalized.
pub fn mixture_density(spec: &MixtureSpec, grid: &GridSpec, t: f64) -> ScalarField {
    ScalarField::from_fn(*grid, |x| spec.density(x, t))
}

/// Agents climbing the log-density of a moving mixture:
/// `v = D ∇f / f`, `σ = D I`.
#[derive(Debug, Clone)]
pub struct MixtureGradientModel {
    pub spec: MixtureSpec,
    pub noise_level: f64,
}

/// Builds the drift/diffusion model whose agents track the mixture `spec`.
pub fn scenario_model(spec: MixtureSpec, noise_level: f64) -> Result<MixtureGradientModel> {
    if !(noise_level > 0.0) || !noise_level.is_finite() {
        return Err(Error::Model(format!(
            "noise level must be positive, got {noise_level}"
        )));
    }
    Ok(MixtureGradientModel { spec, noise_level })
}

impl DriftDiffusion for MixtureGradientModel {
    fn drift(&self, x: Vec2, t: f64) -> Vec2 {
        let g = self.spec.grad_log_density(x, t);
        [self.noise_level * g[0], self.noise_level * g[1]]
    }

    fn noise(&self, _x: Vec2, _t: f64) -> Mat2 {
        let d = self.noise_level;
        [[d, 0.0], [0.0, d]]
    }

    fn diffusion(&self, _x: Vec2, _t: f64) -> Mat2 {
        let s = 0.5 * self.noise_level * self.noise_level;
        [[s, 0.0], [0.0, s]]
    }
}

/// Constant drift and constant noise matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantModel {
    pub velocity: Vec2,
    pub noise: Mat2,
}

impl ConstantModel {
    /// `v = 0`, `σ = level · I`.
    pub fn pure_diffusion(level: f64) -> Self {
        Self {
            velocity: [0.0, 0.0],
            noise: [[level, 0.0], [0.0, level]],
        }
    }

    pub fn still() -> Self {
        Self {
            velocity: [0.0, 0.0],
            noise: [[0.0; 2]; 2],
        }
    }
}

impl DriftDiffusion for ConstantModel {
    fn drift(&self, _x: Vec2, _t: f64) -> Vec2 {
        self.velocity
    }

    fn noise(&self, _x: Vec2, _t: f64) -> Mat2 {
        self.noise
    }

    fn is_autonomous(&self) -> bool {
        true
    }
}

/// Model given directly by closures for the drift and the diffusion tensor.
/// Only usable for generator assembly; the noise matrix is the symmetric
/// square root `σ = (2Σ)^{1/2}`.
pub struct TensorModel<V, S> {
    pub drift: V,
    pub diffusion: S,
}

impl<V, S> DriftDiffusion for TensorModel<V, S>
where
    V: Fn(Vec2, f64) -> Vec2 + Sync,
    S: Fn(Vec2, f64) -> Mat2 + Sync,
{
    fn drift(&self, x: Vec2, t: f64) -> Vec2 {
        (self.drift)(x, t)
    }

    fn noise(&self, x: Vec2, t: f64) -> Mat2 {
        let s = (self.diffusion)(x, t);
        sqrt_spd([
            [2.0 * s[0][0], 2.0 * s[0][1]],
            [2.0 * s[1][0], 2.0 * s[1][1]],
        ])
    }

    fn diffusion(&self, x: Vec2, t: f64) -> Mat2 {
        (self.diffusion)(x, t)
    }
}

/// Principal square root of a 2×2 symmetric positive semidefinite matrix.
fn sqrt_spd(m: Mat2) -> Mat2 {
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).max(0.0);
    let s = det.sqrt();
    let tr = m[0][0] + m[1][1];
    let denom = (tr + 2.0 * s).sqrt();
    if denom == 0.0 {
        return [[0.0; 2]; 2];
    }
    [
        [(m[0][0] + s) / denom, m[0][1] / denom],
        [m[1][0] / denom, (m[1][1] + s) / denom],
    ]
}
