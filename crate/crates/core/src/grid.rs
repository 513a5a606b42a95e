//! Cell-centered rectangular grids, fields sampled on them, and the
//! finite-volume discretization of the Fokker–Planck generator.

use crate::error::{Error, Result};
use crate::model::{DriftDiffusion, Vec2};

/// Uniform cell-centered discretization of `[x_min, x_max] × [y_min, y_max]`.
///
/// Cells are stored row-major: index `j * nx + i` for column `i`, row `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::config("grid", format!("need at least 3×3 cells, got {nx}×{ny}")));
        }
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::config(
                "domain",
                format!("degenerate domain [{x_min}, {x_max}] × [{y_min}, {y_max}]"),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        })
    }

    /// `nx × ny` cells on the unit square.
    pub fn unit(nx: usize, ny: usize) -> Result<Self> {
        Self::new(0.0, 1.0, 0.0, 1.0, nx, ny)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.dy()
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        [self.x_center(i), self.y_center(j)]
    }

    pub fn contains(&self, x: Vec2) -> bool {
        x[0] >= self.x_min && x[0] <= self.x_max && x[1] >= self.y_min && x[1] <= self.y_max
    }
}

/// Real values sampled at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::GridMismatch);
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateField(format!("non-finite value at cell {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; for values produced internally.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.cell_count()],
        }
    }

    /// The uniform probability density on the grid's domain.
    pub fn uniform_density(grid: GridSpec) -> Self {
        Self::constant(grid, 1.0 / grid.area())
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(Vec2) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.center(i, j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint-rule integral over the domain.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_raw(self.grid, values))
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        Self::from_raw(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    /// Checks the density invariants: finite, nonnegative, unit mass.
    pub fn check_density(&self, mass_tol: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::DegenerateField("density has non-finite values".into()));
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > mass_tol {
            return Err(Error::DegenerateField(format!("density mass {mass} differs from 1")));
        }
        let min = self.min();
        if min < 0.0 {
            return Err(Error::DegenerateField(format!("density has negative value {min}")));
        }
        Ok(())
    }
}

/// A pair of scalar fields on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField2 {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self> {
        x.same_grid(&y)?;
        Ok(Self { x, y })
    }

    /// Vector L² norm `(‖x‖² + ‖y‖²)^{1/2}`.
    pub fn l2(&self) -> f64 {
        let a = self.x.grid().cell_area();
        let s: f64 = self
            .x
            .values()
            .iter()
            .chain(self.y.values())
            .map(|v| v * v)
            .sum();
        (s * a).sqrt()
    }
}

/// Centered differences in the interior and one-sided differences in the
/// boundary cells.
pub fn gradient(f: &ScalarField) -> VectorField2 {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let (dx, dy) = (g.dx(), g.dy());
    let v = f.values();
    let mut gx = vec![0.0; v.len()];
    let mut gy = vec![0.0; v.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = g.index(i, j);
            gx[k] = if i == 0 {
                (v[k + 1] - v[k]) / dx
            } else if i == nx - 1 {
                (v[k] - v[k - 1]) / dx
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * dx)
            };
            gy[k] = if j == 0 {
                (v[k + nx] - v[k]) / dy
            } else if j == ny - 1 {
                (v[k] - v[k - nx]) / dy
            } else {
                (v[k + nx] - v[k - nx]) / (2.0 * dy)
            };
        }
    }
    VectorField2 {
        x: ScalarField::from_raw(g, gx),
        y: ScalarField::from_raw(g, gy),
    }
}

/// Midpoint-rule integral of `f`.
pub fn mass(f: &ScalarField) -> f64 {
    f.mass()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    /// `‖f‖_{L²} + Σ_j ‖∂_j f‖_{L²}`
    pub h1: f64,
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    let s: f64 = f.values().iter().map(|v| v * v).sum();
    (s * f.grid().cell_area()).sqrt()
}

pub fn l1_norm(f: &ScalarField) -> f64 {
    f.values().iter().map(|v| v.abs()).sum::<f64>() * f.grid().cell_area()
}

pub fn norms(f: &ScalarField) -> Norms {
    let grad = gradient(f);
    let l2 = l2_norm(f);
    Norms {
        l1: l1_norm(f),
        l2,
        h1: l2 + l2_norm(&grad.x) + l2_norm(&grad.y),
    }
}

/// Sparse row-compressed discretization of the Fokker–Planck generator.
///
/// Every column sums to exactly zero in floating point: all entries are
/// integer multiples of a common power-of-two quantum small enough that
/// every partial column sum is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<usize>,
}

/// Bits of headroom kept between the largest entry and the quantum.
const QUANTUM_BITS: i32 = 40;

impl GeneratorMatrix {
    fn from_contributions(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        let max_abs = triplets.iter().map(|t| t.2.abs()).fold(0.0, f64::max);
        if max_abs > 0.0 {
            let exp = max_abs.log2().ceil() as i32;
            let quantum = 2f64.powi(exp - QUANTUM_BITS);
            for t in triplets.iter_mut() {
                t.2 = (t.2 / quantum).round() * quantum;
            }
        }
        // explicit diagonal in every row
        triplets.extend((0..n).map(|r| (r, r, 0.0)));
        triplets.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut diag = vec![usize::MAX; n];
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                if r == c {
                    diag[r] = vals.len() - 1;
                }
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_contributions(n, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn diagonal(&self, r: usize) -> f64 {
        self.vals[self.diag[r]]
    }

    /// Iterates `(column, value)` over row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|r| self.diagonal(r).abs()).fold(0.0, f64::max)
    }

    /// Largest explicit Euler step keeping `I + dt·A` entrywise nonnegative.
    pub fn dt_max(&self) -> f64 {
        let a = self.max_abs_diagonal();
        if a == 0.0 {
            f64::INFINITY
        } else {
            1.0 / a
        }
    }

    /// Column sums accumulated in row order.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                sums[c] += v;
            }
        }
        sums
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    /// `out = A x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(x, &mut out);
        out
    }

    /// `x ← x + dt·A x`.
    pub fn euler_step(&self, x: &mut [f64], dt: f64) {
        let ax = self.apply(x);
        for (xi, a) in x.iter_mut().zip(ax) {
            *xi += dt * a;
        }
    }

    /// `out = A P` for a dense row-major `n × n` matrix `P`.
    pub fn mul_dense_into(&self, p: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                let src = &p[c * n..(c + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }

    /// Builds a matrix from explicit entries (duplicates are summed). The
    /// column-sum identity is only guaranteed for assembled generators.
    pub fn from_entries(n: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        Self::from_contributions(n, entries)
    }
}

/// Assembles the finite-volume generator of
/// `∂_t p = -Σ_j ∂_j(v_j p) + Σ_{jk} ∂_j ∂_k(Σ_{jk} p)` with zero-flux walls.
///
/// Face fluxes: first-order upwind advection with the drift sampled at face
/// midpoints, centered differences of `Σ p` (diffusion tensor sampled at cell
/// centers), and the cross terms averaged from the two adjacent cells.
pub fn assemble_generator<M: DriftDiffusion + ?Sized>(
    grid: &GridSpec,
    model: &M,
    t: f64,
) -> Result<GeneratorMatrix> {
    let g = *grid;
    let (nx, ny) = (g.nx, g.ny);
    let (dx, dy) = (g.dx(), g.dy());
    let n = g.cell_count();

    let mut sigma = Vec::with_capacity(n);
    for j in 0..ny {
        for i in 0..nx {
            let s = model.diffusion(g.center(i, j), t);
            let finite = s.iter().flatten().all(|v| v.is_finite());
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let symmetric = (s[0][1] - s[1][0]).abs() <= 1e-12 * (s[0][0].abs() + s[1][1].abs());
            if !finite || !symmetric || !(s[0][0] > 0.0) || !(det > 0.0) {
                return Err(Error::NotPositiveDefinite { i, j, sigma: s });
            }
            sigma.push(s);
        }
    }

    // Flux across a face written as Σ_k w_k p_k, flowing from `from` into `to`
    // per unit face length.
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(n * 24);
    let mut push_flux = |from: usize, to: usize, width: f64, terms: &[(usize, f64)]| {
        for &(k, w) in terms {
            if w != 0.0 {
                let c = w / width;
                triplets.push((from, k, -c));
                triplets.push((to, k, c));
            }
        }
    };

    // centered derivative along y of (Σ_xy p) in column i, row j
    let cross_y = |i: usize, j: usize, terms: &mut Vec<(usize, f64)>, scale: f64| {
        let (lo, hi, span) = if j == 0 {
            (j, j + 1, dy)
        } else if j == ny - 1 {
            (j - 1, j, dy)
        } else {
            (j - 1, j + 1, 2.0 * dy)
        };
        let a = g.index(i, lo);
        let b = g.index(i, hi);
        terms.push((b, scale * sigma[b][0][1] / span));
        terms.push((a, -scale * sigma[a][0][1] / span));
    };
    let cross_x = |i: usize, j: usize, terms: &mut Vec<(usize, f64)>, scale: f64| {
        let (lo, hi, span) = if i == 0 {
            (i, i + 1, dx)
        } else if i == nx - 1 {
            (i - 1, i, dx)
        } else {
            (i - 1, i + 1, 2.0 * dx)
        };
        let a = g.index(lo, j);
        let b = g.index(hi, j);
        terms.push((b, scale * sigma[b][1][0] / span));
        terms.push((a, -scale * sigma[a][1][0] / span));
    };

    let mut terms = Vec::with_capacity(8);
    for j in 0..ny {
        for i in 0..nx - 1 {
            let l = g.index(i, j);
            let r = g.index(i + 1, j);
            let face = [g.x_min + (i + 1) as f64 * dx, g.y_center(j)];
            let v = model.drift(face, t)[0];
            if !v.is_finite() {
                return Err(Error::Model(format!("non-finite drift at {face:?}")));
            }
            terms.clear();
            terms.push((l, v.max(0.0)));
            terms.push((r, v.min(0.0)));
            terms.push((r, -sigma[r][0][0] / dx));
            terms.push((l, sigma[l][0][0] / dx));
            cross_y(i, j, &mut terms, -0.5);
            cross_y(i + 1, j, &mut terms, -0.5);
            push_flux(l, r, dx, &terms);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let b = g.index(i, j);
            let t_ = g.index(i, j + 1);
            let face = [g.x_center(i), g.y_min + (j + 1) as f64 * dy];
            let v = model.drift(face, t)[1];
            if !v.is_finite() {
                return Err(Error::Model(format!("non-finite drift at {face:?}")));
            }
            terms.clear();
            terms.push((b, v.max(0.0)));
            terms.push((t_, v.min(0.0)));
            terms.push((t_, -sigma[t_][1][1] / dy));
            terms.push((b, sigma[b][1][1] / dy));
            cross_x(i, j, &mut terms, -0.5);
            cross_x(i, j + 1, &mut terms, -0.5);
            push_flux(b, t_, dy, &terms);
        }
    }

    Ok(GeneratorMatrix::from_contributions(n, triplets))
}
