//! Ground-truth density propagation by explicit Euler on the discrete
//! Fokker–Planck generator.

use crate::error::{Error, Result};
use crate::grid::{assemble_generator, GeneratorMatrix, GridSpec, ScalarField};
use crate::model::DriftDiffusion;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState {
    pub p: ScalarField,
    pub t: f64,
}

/// Number of equal Euler substeps of `dt` that keeps each substep within
/// `fraction · dt_max(A)`.
pub fn substeps(a: &GeneratorMatrix, dt: f64, fraction: f64) -> usize {
    let bound = fraction * a.dt_max();
    if bound.is_infinite() {
        1
    } else {
        let mut s = ((dt / bound).ceil() as usize).max(1);
        while dt / s as f64 > bound {
            s += 1;
        }
        s
    }
}

/// Density propagator `x ← (I + δA)^s x` with `δ = dt/s` and `s` the
/// smallest substep count that respects the positivity bound.
pub fn propagate_density(a: &GeneratorMatrix, x: &mut [f64], dt: f64) {
    let s = substeps(a, dt, 1.0);
    let delta = dt / s as f64;
    for _ in 0..s {
        a.euler_step(x, delta);
    }
}

/// One explicit Euler step `p ← (I + dt·A) p`. Requires `dt ≤ 1/max|A_ii|`.
pub fn reference_step(state: &ReferenceState, a: &GeneratorMatrix, dt: f64) -> Result<ReferenceState> {
    let dt_max = a.dt_max();
    if !(dt > 0.0) || dt > dt_max {
        return Err(Error::StepSize { dt, dt_max });
    }
    let mut values = state.p.values().to_vec();
    a.euler_step(&mut values, dt);
    Ok(ReferenceState {
        p: ScalarField::new(*state.p.grid(), values)?,
        t: state.t + dt,
    })
}

/// Incremental reference solver; reassembles the generator for time-varying
/// models and splits each step into admissible substeps.
pub struct ReferenceSolver<'m, M: DriftDiffusion + ?Sized> {
    model: &'m M,
    grid: GridSpec,
    state: ReferenceState,
    cached: Option<GeneratorMatrix>,
}

impl<'m, M: DriftDiffusion + ?Sized> ReferenceSolver<'m, M> {
    pub fn new(p0: ScalarField, model: &'m M) -> Result<Self> {
        p0.check_density(1e-8)?;
        Ok(Self {
            model,
            grid: *p0.grid(),
            state: ReferenceState { p: p0, t: 0.0 },
            cached: None,
        })
    }

    pub fn state(&self) -> &ReferenceState {
        &self.state
    }

    /// Generator at the current time (cached for autonomous models).
    pub fn generator(&mut self) -> Result<GeneratorMatrix> {
        if self.model.is_autonomous() {
            if let Some(a) = &self.cached {
                return Ok(a.clone());
            }
        }
        let a = assemble_generator(&self.grid, self.model, self.state.t)?;
        if self.model.is_autonomous() {
            self.cached = Some(a.clone());
        }
        Ok(a)
    }

    /// Advances by `dt` with a given generator.
    pub fn advance_with(&mut self, a: &GeneratorMatrix, dt: f64) -> Result<()> {
        let s = substeps(a, dt, 1.0);
        let delta = dt / s as f64;
        let mut next = self.state.clone();
        for _ in 0..s {
            next = reference_step(&next, a, delta)?;
        }
        next.t = self.state.t + dt;
        self.state = next;
        Ok(())
    }

    pub fn advance(&mut self, dt: f64) -> Result<()> {
        let a = self.generator()?;
        self.advance_with(&a, dt)
    }
}

/// Propagates `p0` to `t_end`, recording the initial state, every
/// `snapshot_every`-th step, and the final state.
pub fn run_reference<M: DriftDiffusion + ?Sized>(
    p0: ScalarField,
    model: &M,
    t_end: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<Vec<ReferenceState>> {
    if !(dt > 0.0) {
        return Err(Error::config("dt", "must be positive"));
    }
    let steps = (t_end / dt).round() as usize;
    let cadence = snapshot_every.max(1);
    let mut solver = ReferenceSolver::new(p0, model)?;
    let mut out = vec![solver.state().clone()];
    for k in 1..=steps {
        solver.advance(dt)?;
        if k % cadence == 0 || k == steps {
            out.push(solver.state().clone());
        }
    }
    Ok(out)
}
