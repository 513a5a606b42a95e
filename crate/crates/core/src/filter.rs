//! Centralized density filter: Kalman-type correction of the discrete
//! Fokker–Planck prediction with a dense Riccati covariance.
//!
//! One filter step with generator `A`, observation `y`, and diagonal
//! observation covariance `R` is
//!
//! ```text
//! P⁺ = P − P (P + R/dt)⁻¹ P
//! p̂ ← Φ p̂ + dt · P⁺ R⁻¹ (y − p̂)
//! P ← Φ P⁺ Φᵀ
//! ```
//!
//! where `Φ = (I + δA)^s` with `s` substeps of length `δ = dt/s` within the
//! explicit stability bound of `A`. Against the Euler step of the Riccati
//! equation, `P + dt (A P + P Aᵀ − P R⁻¹ P)`, both the first and last lines
//! differ by `O(dt²)`, but they keep `P` positive semidefinite and stay
//! bounded when `R⁻¹` is large, as it is wherever the observed density is
//! nearly zero. Since the columns of `A` sum to zero and `P𝟙 = 0`, both the
//! innovation and the covariance update leave the mass of `p̂` and the null
//! vector `𝟙` intact.

use faer::linalg::matmul::triangular::{matmul, BlockStructure};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};

use crate::error::{Error, Result};
use crate::grid::{GeneratorMatrix, ScalarField};
use crate::reference::{propagate_density, substeps};

/// Dense symmetric `n × n` covariance stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// `scale · (I − 𝟙𝟙ᵀ/n)`.
    pub fn scaled_projector(n: usize, scale: f64) -> Self {
        let off = -scale / n as f64;
        let mut data = vec![off; n * n];
        for i in 0..n {
            data[i * n + i] = scale + off;
        }
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::config("covariance", "matrix must be square"));
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |P_ij − P_ji|`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }

    /// `‖P𝟙‖_∞`.
    pub fn ones_residual(&self) -> f64 {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Measurement update `P ← P − P (P + D)⁻¹ P` with `D = diag(R / dt)`,
    /// evaluated as `P − YᵀY`, `Y = L⁻¹ D^{-1/2} P`, `LLᵀ = I + D^{-1/2} P D^{-1/2}`.
    /// Only the lower triangle is formed; the upper one is mirrored.
    fn measurement_update(&mut self, rinv: &[f64], dt: f64) -> Result<()> {
        let n = self.n;
        let s: Vec<f64> = rinv.iter().map(|r| (dt * r).sqrt()).collect();
        // P is symmetric, so its row-major storage is also its column-major one
        let p = MatRef::from_column_major_slice(&self.data, n, n);
        let gram = Mat::from_fn(n, n, |i, j| s[i] * p[(i, j)] * s[j] + if i == j { 1.0 } else { 0.0 });
        let llt = gram
            .llt(Side::Lower)
            .map_err(|e| Error::health(format!("measurement update factorization failed: {e:?}")))?;
        let mut y = Mat::from_fn(n, n, |i, j| s[i] * p[(i, j)]);
        solve_lower_triangular_in_place(llt.L(), y.as_mut(), Par::Seq);
        let mut out = MatMut::from_column_major_slice_mut(&mut self.data, n, n);
        matmul(
            out.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Add,
            y.transpose(),
            BlockStructure::Rectangular,
            y.as_ref(),
            BlockStructure::Rectangular,
            -1.0,
            Par::Seq,
        );
        for j in 0..n {
            for i in j + 1..n {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
        Ok(())
    }

    /// `P ← Φ P Φᵀ` with the same `Φ` as the density prediction: `Q = Φ P`
    /// row by row, then `Φ Qᵀ`, then symmetrized.
    fn propagate(&mut self, a: &GeneratorMatrix, dt: f64) {
        let n = self.n;
        let s = substeps(a, dt, 1.0);
        let delta = dt / s as f64;
        let mut work = vec![0.0; n * n];
        let mut apply_phi = |m: &mut [f64]| {
            for _ in 0..s {
                a.mul_dense_into(m, &mut work);
                for (x, w) in m.iter_mut().zip(&work) {
                    *x += delta * w;
                }
            }
        };
        let mut q = self.data.clone();
        apply_phi(&mut q);
        const TILE: usize = 32;
        for i0 in (0..n).step_by(TILE) {
            for j0 in (0..n).step_by(TILE) {
                for i in i0..(i0 + TILE).min(n) {
                    for j in j0..(j0 + TILE).min(n) {
                        self.data[j * n + i] = q[i * n + j];
                    }
                }
            }
        }
        apply_phi(&mut self.data);
        for i0 in (0..n).step_by(TILE) {
            for j0 in (i0..n).step_by(TILE) {
                for i in i0..(i0 + TILE).min(n) {
                    for j in j0.max(i + 1)..(j0 + TILE).min(n) {
                        let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                        self.data[i * n + j] = v;
                        self.data[j * n + i] = v;
                    }
                }
            }
        }
    }
}

/// Diagonal observation covariance with entries clamped below by `floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCovariance {
    entries: Vec<f64>,
    floor: f64,
}

impl DiagonalCovariance {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Entrywise inverse.
    pub fn inverse(&self) -> Vec<f64> {
        self.entries.iter().map(|r| 1.0 / r).collect()
    }
}

/// `max(k · y_m, floor)` for every cell.
pub fn make_diag_cov(y: &ScalarField, k: f64, floor: f64) -> Result<DiagonalCovariance> {
    if !(k > 0.0) {
        return Err(Error::config("kbar", format!("must be positive, got {k}")));
    }
    if !(floor > 0.0) {
        return Err(Error::config("floor", format!("must be positive, got {floor}")));
    }
    Ok(DiagonalCovariance {
        entries: y.values().iter().map(|v| (k * v).max(floor)).collect(),
        floor,
    })
}

fn check_update_inputs(cov: &CovarianceMatrix, a: &GeneratorMatrix, rinv: &[f64], dt: f64) -> Result<()> {
    if a.dim() != cov.n || rinv.len() != cov.n {
        return Err(Error::GridMismatch);
    }
    if !(dt > 0.0) {
        return Err(Error::config("dt", format!("must be positive, got {dt}")));
    }
    if rinv.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::health("observation precision must be positive and finite"));
    }
    Ok(())
}

fn check_covariance(cov: &CovarianceMatrix) -> Result<()> {
    if !cov.frobenius_norm().is_finite() {
        return Err(Error::health("covariance became non-finite"));
    }
    Ok(())
}

/// In-place Riccati update; see the module docs for the scheme.
pub fn riccati_update(cov: &mut CovarianceMatrix, a: &GeneratorMatrix, rinv: &[f64], dt: f64) -> Result<()> {
    check_update_inputs(cov, a, rinv, dt)?;
    cov.measurement_update(rinv, dt)?;
    cov.propagate(a, dt);
    check_covariance(cov)
}

/// Returns the covariance after one Riccati step.
pub fn riccati_step(cov: &CovarianceMatrix, a: &GeneratorMatrix, rinv: &[f64], dt: f64) -> Result<CovarianceMatrix> {
    let mut next = cov.clone();
    riccati_update(&mut next, a, rinv, dt)?;
    Ok(next)
}

/// Shared filter update used by both the centralized and the local filters.
///
/// `coupling`, when present with a nonzero `theta`, is the neighbor
/// disagreement `Σ_j (p̂_j − p̂)` and enters through the same gain matrix.
pub(crate) fn filter_update(
    p_hat: &mut ScalarField,
    cov: &mut CovarianceMatrix,
    a: &GeneratorMatrix,
    y: &ScalarField,
    rinv: &[f64],
    coupling: Option<(&[f64], f64)>,
    dt: f64,
) -> Result<()> {
    p_hat.same_grid(y)?;
    if cov.dim() != p_hat.values().len() {
        return Err(Error::GridMismatch);
    }
    let mass_before = p_hat.mass();
    let mut weights: Vec<f64> = rinv
        .iter()
        .zip(y.values().iter().zip(p_hat.values()))
        .map(|(r, (yv, pv))| r * (yv - pv))
        .collect();
    if let Some((disagreement, theta)) = coupling {
        if theta != 0.0 {
            for (w, d) in weights.iter_mut().zip(disagreement) {
                *w += theta * d;
            }
        }
    }
    check_update_inputs(cov, a, rinv, dt)?;
    cov.measurement_update(rinv, dt)?;
    let correction = cov.mul_vec(&weights);

    let values = p_hat.values_mut();
    propagate_density(a, values, dt);
    for (v, c) in values.iter_mut().zip(&correction) {
        *v += dt * c;
    }
    cov.propagate(a, dt);
    check_covariance(cov)?;

    if !p_hat.is_finite() {
        return Err(Error::health("density estimate became non-finite"));
    }
    let drift = (p_hat.mass() - mass_before).abs();
    if drift > 1e-6 {
        return Err(Error::health(format!("estimate mass drifted by {drift} in one step")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralFilterState {
    pub p_hat: ScalarField,
    pub cov: CovarianceMatrix,
    pub t: f64,
}

impl CentralFilterState {
    /// Starts from `p0` with covariance `scale · (I − 𝟙𝟙ᵀ/M)`.
    pub fn new(p0: ScalarField, scale: f64) -> Self {
        let n = p0.values().len();
        Self {
            p_hat: p0,
            cov: CovarianceMatrix::scaled_projector(n, scale),
            t: 0.0,
        }
    }

    /// In-place version of [`central_filter_step`].
    pub fn step(&mut self, a: &GeneratorMatrix, y: &ScalarField, rinv: &[f64], dt: f64) -> Result<()> {
        filter_update(&mut self.p_hat, &mut self.cov, a, y, rinv, None, dt)?;
        self.t += dt;
        Ok(())
    }
}

pub fn central_filter_step(
    state: &CentralFilterState,
    a: &GeneratorMatrix,
    y: &ScalarField,
    rinv: &[f64],
    dt: f64,
) -> Result<CentralFilterState> {
    let mut next = state.clone();
    next.step(a, y, rinv, dt)?;
    Ok(next)
}
