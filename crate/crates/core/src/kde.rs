//! Kernel density observations on the grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::model::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    /// Kernel value at `|u|² = r2` in `dim` dimensions.
    pub fn eval(&self, r2: f64, dim: usize) -> f64 {
        match self {
            Kernel::Gaussian => (2.0 * PI).powf(-(dim as f64) / 2.0) * (-0.5 * r2).exp(),
            Kernel::Epanechnikov => {
                if r2 < 1.0 {
                    epanechnikov_constant(dim) * (1.0 - r2)
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ K(u)² du`: closed form for the Gaussian, quadrature otherwise.
    pub fn squared_integral(&self, dim: usize) -> Result<f64> {
        match self {
            Kernel::Gaussian => Ok((4.0 * PI).powf(-(dim as f64) / 2.0)),
            Kernel::Epanechnikov => squared_integral_quadrature(*self, dim),
        }
    }
}

fn epanechnikov_constant(dim: usize) -> f64 {
    // (n + 2) / (2 V_n) with V_n the volume of the unit ball
    let ball = match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(dim as f64 / 2.0) / gamma_half_integer(dim + 2),
    };
    (dim as f64 + 2.0) / (2.0 * ball)
}

/// `Γ(k/2)` for a positive integer `k`.
fn gamma_half_integer(k: usize) -> f64 {
    if k == 1 {
        PI.sqrt()
    } else if k == 2 {
        1.0
    } else {
        (k as f64 / 2.0 - 1.0) * gamma_half_integer(k - 2)
    }
}

/// Midpoint quadrature of `∫K²` over `[-L, L]^dim` for `dim ∈ {1, 2}`.
fn squared_integral_quadrature(kernel: Kernel, dim: usize) -> Result<f64> {
    let half_width = match kernel {
        Kernel::Gaussian => 9.0,
        Kernel::Epanechnikov => 1.0,
    };
    let n = 4000;
    let h = 2.0 * half_width / n as f64;
    let node = |k: usize| -half_width + (k as f64 + 0.5) * h;
    match dim {
        1 => Ok((0..n).map(|k| kernel.eval(node(k).powi(2), 1).powi(2)).sum::<f64>() * h),
        2 => {
            let mut total = 0.0;
            for a in 0..n {
                let ua = node(a).powi(2);
                let row: f64 = (0..n).map(|b| kernel.eval(ua + node(b).powi(2), 2).powi(2)).sum();
                total += row;
            }
            Ok(total * h * h)
        }
        _ => Err(Error::config("kernel", format!("quadrature supports dimensions 1 and 2, got {dim}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub dim: usize,
}

impl KernelSpec {
    /// Planar Gaussian kernel with bandwidth `h`.
    pub fn gaussian(h: f64) -> Result<Self> {
        Self::new(Kernel::Gaussian, h, 2)
    }

    pub fn new(kernel: Kernel, bandwidth: f64, dim: usize) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::config("bandwidth", format!("must be positive, got {bandwidth}")));
        }
        if dim == 0 {
            return Err(Error::config("kernel", "dimension must be at least 1"));
        }
        Ok(Self { kernel, bandwidth, dim })
    }

    /// Scaled kernel `h^{-n} K((x - c)/h)` at a single point.
    pub fn scaled(&self, x: Vec2, centre: Vec2) -> f64 {
        let h = self.bandwidth;
        let r2 = ((x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2)) / (h * h);
        self.kernel.eval(r2, 2) / (h * h)
    }
}

/// Samples `h^{-2} K((x - x_i)/h)` at cell centers without renormalizing.
pub fn sample_kernel(x_i: Vec2, spec: &KernelSpec, grid: &GridSpec) -> ScalarField {
    let g = *grid;
    match spec.kernel {
        Kernel::Gaussian => {
            // separable: one exponential per row and column
            let h = spec.bandwidth;
            let ex: Vec<f64> = (0..g.nx)
                .map(|i| (-0.5 * ((g.x_center(i) - x_i[0]) / h).powi(2)).exp())
                .collect();
            let ey: Vec<f64> = (0..g.ny)
                .map(|j| (-0.5 * ((g.y_center(j) - x_i[1]) / h).powi(2)).exp())
                .collect();
            let norm = 1.0 / (2.0 * PI * h * h);
            let mut values = Vec::with_capacity(g.cell_count());
            for ey_j in &ey {
                let row = norm * ey_j;
                values.extend(ex.iter().map(|e| row * e));
            }
            ScalarField::from_raw(g, values)
        }
        Kernel::Epanechnikov => ScalarField::from_fn(g, |x| spec.scaled(x, x_i)),
    }
}

/// Kernel centered at `x_i`, rescaled so its grid mass is exactly one
/// (mass lost past the walls is redistributed proportionally).
pub fn kernel_field(x_i: Vec2, spec: &KernelSpec, grid: &GridSpec) -> ScalarField {
    let mut field = sample_kernel(x_i, spec, grid);
    let mass = field.mass();
    if mass > 0.0 {
        let inv = 1.0 / mass;
        field.values_mut().iter_mut().for_each(|v| *v *= inv);
    }
    field
}

/// Mean of the per-agent kernel fields. Agents are accumulated in a canonical
/// order so the result does not depend on how they are listed.
pub fn kde_estimate(positions: &[Vec2], spec: &KernelSpec, grid: &GridSpec) -> Result<ScalarField> {
    if positions.is_empty() {
        return Err(Error::config("agents", "kernel density estimate needs at least one agent"));
    }
    let mut order: Vec<Vec2> = positions.to_vec();
    order.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut acc = vec![0.0; grid.cell_count()];
    for x in &order {
        let k = kernel_field(*x, spec, grid);
        for (a, v) in acc.iter_mut().zip(k.values()) {
            *a += v;
        }
    }
    let inv = 1.0 / positions.len() as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    Ok(ScalarField::from_raw(*grid, acc))
}

/// Observation-noise scale `∫K² / (N hⁿ)`.
pub fn kbar(n_agents: usize, spec: &KernelSpec) -> Result<f64> {
    if n_agents == 0 {
        return Err(Error::config("agents", "need at least one agent"));
    }
    let k2 = spec.kernel.squared_integral(spec.dim)?;
    Ok(k2 / (n_agents as f64 * spec.bandwidth.powi(spec.dim as i32)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::unit(30, 30).unwrap()
    }

    #[test]
    fn peak_before_normalization() {
        let g = grid();
        let spec = KernelSpec::gaussian(0.08).unwrap();
        let centre = g.center(15, 15);
        let raw = sample_kernel(centre, &spec, &g);
        let want = 1.0 / (2.0 * PI * 0.08 * 0.08);
        assert!((raw.max() - want).abs() < 1e-12 * want);
        assert!((want - 24.868).abs() < 1e-3);
    }

    #[test]
    fn kernel_field_has_unit_mass_and_point_symmetry() {
        let g = grid();
        let spec = KernelSpec::gaussian(0.08).unwrap();
        let a = kernel_field([0.21, 0.93], &spec, &g);
        assert!((a.mass() - 1.0).abs() < 1e-12);
        let b = kernel_field([0.79, 0.07], &spec, &g);
        let m = g.cell_count();
        for k in 0..m {
            assert!((a.values()[k] - b.values()[m - 1 - k]).abs() < 1e-10);
        }
    }

    #[test]
    fn kde_is_the_mean_of_kernel_fields() {
        let g = grid();
        let spec = KernelSpec::gaussian(0.08).unwrap();
        let pts = [[0.1, 0.2], [0.5, 0.55], [0.97, 0.3]];
        let y = kde_estimate(&pts, &spec, &g).unwrap();
        assert!((y.mass() - 1.0).abs() < 1e-12);
        assert!(y.min() > 0.0);
        for k in 0..g.cell_count() {
            let mean: f64 = pts.iter().map(|p| kernel_field(*p, &spec, &g).values()[k]).sum::<f64>() / 3.0;
            assert!((y.values()[k] - mean).abs() < 1e-12);
        }
        let single = kde_estimate(&pts[..1], &spec, &g).unwrap();
        assert_eq!(single, kernel_field(pts[0], &spec, &g));
        assert!(kde_estimate(&[], &spec, &g).is_err());
    }

    #[test]
    fn kde_is_permutation_invariant() {
        let g = grid();
        let spec = KernelSpec::gaussian(0.08).unwrap();
        let pts: Vec<Vec2> = (0..40)
            .map(|k| {
                let a = k as f64 * 0.6180339887;
                [a.fract(), (a * 1.7).fract()]
            })
            .collect();
        let mut rev = pts.clone();
        rev.reverse();
        rev.swap(3, 17);
        assert_eq!(kde_estimate(&pts, &spec, &g).unwrap(), kde_estimate(&rev, &spec, &g).unwrap());
    }

    #[test]
    fn kbar_values() {
        let spec = KernelSpec::gaussian(0.08).unwrap();
        let k = kbar(100, &spec).unwrap();
        assert!((k - 1.0 / (4.0 * PI * 100.0 * 0.0064)).abs() < 1e-15);
        assert!((k - 0.12434).abs() < 1e-4);
        assert!((kbar(200, &spec).unwrap() - k / 2.0).abs() < 1e-15);
        assert!(kbar(0, &spec).is_err());
    }

    #[test]
    fn squared_integrals_match_quadrature() {
        let closed = Kernel::Gaussian.squared_integral(1).unwrap();
        assert!((closed - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-15);
        let quad1 = squared_integral_quadrature(Kernel::Gaussian, 1).unwrap();
        assert!((quad1 - closed).abs() < 1e-10);
        let quad2 = squared_integral_quadrature(Kernel::Gaussian, 2).unwrap();
        assert!((quad2 - 1.0 / (4.0 * PI)).abs() < 1e-9);

        // Epanechnikov: 3/5 in 1-D, 4/(3π) in 2-D
        let e1 = Kernel::Epanechnikov.squared_integral(1).unwrap();
        assert!((e1 - 0.6).abs() < 1e-6);
        let e2 = Kernel::Epanechnikov.squared_integral(2).unwrap();
        assert!((e2 - 4.0 / (3.0 * PI)).abs() < 1e-5);
    }

    #[test]
    fn epanechnikov_field_is_a_density() {
        let g = grid();
        let spec = KernelSpec::new(Kernel::Epanechnikov, 0.2, 2).unwrap();
        let f = kernel_field([0.5, 0.5], &spec, &g);
        assert!((f.mass() - 1.0).abs() < 1e-12);
        assert!(f.min() >= 0.0);
        assert!(KernelSpec::gaussian(0.0).is_err());
    }
}
