//! Euler–Maruyama simulation of the agent ensemble with mirror reflection
//! at the domain walls.
//!
//! Randomness is counter-based: the normal draws of agent `i` at step `k`
//! come from a ChaCha stream selected by `(seed, i)` and positioned by `k`,
//! so trajectories do not depend on how agents are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{DriftDiffusion, Vec2};

/// Words reserved per step in each agent's stream.
const WORDS_PER_STEP: u128 = 1 << 16;
const MAX_REFLECTIONS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentEnsemble {
    positions: Vec<Vec2>,
    bounds: [f64; 4],
    seed: u64,
    step: u64,
}

fn agent_rng(seed: u64, agent: usize, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng.set_word_pos(block as u128 * WORDS_PER_STEP);
    rng
}

/// Draws `n` i.i.d. uniform positions on the grid's domain.
pub fn init_uniform(n: usize, grid: &GridSpec, seed: u64) -> Result<AgentEnsemble> {
    if n == 0 {
        return Err(Error::config("agents", "need at least one agent"));
    }
    let positions = (0..n)
        .map(|i| {
            let mut rng = agent_rng(seed, i, 0);
            [
                rng.gen_range(grid.x_min..grid.x_max),
                rng.gen_range(grid.y_min..grid.y_max),
            ]
        })
        .collect();
    Ok(AgentEnsemble {
        positions,
        bounds: [grid.x_min, grid.x_max, grid.y_min, grid.y_max],
        seed,
        step: 0,
    })
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> Option<f64> {
    for _ in 0..MAX_REFLECTIONS {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return Some(x);
        }
    }
    (lo..=hi).contains(&x).then_some(x)
}

impl AgentEnsemble {
    /// Ensemble at explicit positions, all of which must lie in the domain.
    pub fn from_positions(positions: Vec<Vec2>, grid: &GridSpec, seed: u64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::config("agents", "need at least one agent"));
        }
        if let Some(k) = positions.iter().position(|p| !grid.contains(*p)) {
            return Err(Error::config("agents", format!("agent {k} lies outside the domain")));
        }
        Ok(Self {
            positions,
            bounds: [grid.x_min, grid.x_max, grid.y_min, grid.y_max],
            seed,
            step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    /// Number of steps taken since initialization.
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One Euler–Maruyama step `X ← X + v dt + σ √dt ξ` from time `t`.
    pub fn step<M: DriftDiffusion + ?Sized>(&mut self, model: &M, t: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::config("dt", format!("time step must be positive, got {dt}")));
        }
        let [x_lo, x_hi, y_lo, y_hi] = self.bounds;
        let seed = self.seed;
        let block = self.step + 1;
        let sq = dt.sqrt();
        let failed = self
            .positions
            .par_iter_mut()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = agent_rng(seed, i, block);
                let xi: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let v = model.drift(*x, t);
                let s = model.noise(*x, t);
                let proposal = [
                    x[0] + v[0] * dt + sq * (s[0][0] * xi[0] + s[0][1] * xi[1]),
                    x[1] + v[1] * dt + sq * (s[1][0] * xi[0] + s[1][1] * xi[1]),
                ];
                match (reflect(proposal[0], x_lo, x_hi), reflect(proposal[1], y_lo, y_hi)) {
                    (Some(a), Some(b)) => {
                        *x = [a, b];
                        None
                    }
                    _ => Some(i),
                }
            })
            .reduce(|| None, |a, b| a.or(b));
        if let Some(agent) = failed {
            return Err(Error::Reflection { agent });
        }
        self.step += 1;
        Ok(())
    }
}

/// Free-function form of [`AgentEnsemble::step`] returning the new ensemble.
pub fn step_ensemble<M: DriftDiffusion + ?Sized>(
    ens: &AgentEnsemble,
    model: &M,
    t: f64,
    dt: f64,
) -> Result<AgentEnsemble> {
    let mut next = ens.clone();
    next.step(model, t, dt)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstantModel;

    fn unit() -> GridSpec {
        GridSpec::unit(10, 10).unwrap()
    }

    #[test]
    fn single_agent_is_deterministic_and_inside() {
        let a = init_uniform(1, &unit(), 42).unwrap();
        let b = init_uniform(1, &unit(), 42).unwrap();
        assert_eq!(a, b);
        assert!(unit().contains(a.positions()[0]));
        assert!(init_uniform(0, &unit(), 1).is_err());
    }

    #[test]
    fn uniform_mean_is_within_clt_bound() {
        let n = 100_000;
        let ens = init_uniform(n, &unit(), 7).unwrap();
        let bound = 3.0 * (1.0 / 12f64).sqrt() / (n as f64).sqrt();
        for axis in 0..2 {
            let mean = ens.positions().iter().map(|p| p[axis]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < bound, "axis {axis} mean {mean}");
        }
    }

    #[test]
    fn still_model_leaves_agents_in_place() {
        let mut ens = init_uniform(20, &unit(), 3).unwrap();
        let before = ens.positions().to_vec();
        ens.step(&ConstantModel::still(), 0.0, 0.1).unwrap();
        assert_eq!(ens.positions(), &before[..]);
    }

    #[test]
    fn constant_drift_shifts_deterministically() {
        let ens = AgentEnsemble::from_positions(vec![[0.3, 0.4]], &unit(), 0).unwrap();
        let model = ConstantModel {
            velocity: [0.1, 0.0],
            noise: [[0.0; 2]; 2],
        };
        let next = step_ensemble(&ens, &model, 0.0, 0.1).unwrap();
        assert!((next.positions()[0][0] - 0.31).abs() < 1e-15);
        assert_eq!(next.positions()[0][1], 0.4);
        assert!(step_ensemble(&ens, &model, 0.0, 0.0).is_err());
    }

    #[test]
    fn brownian_increment_variance() {
        let d = 0.03;
        let dt = 0.1;
        let n = 1000;
        let centre = vec![[0.5, 0.5]; n];
        let mut ens = AgentEnsemble::from_positions(centre, &unit(), 11).unwrap();
        let model = ConstantModel::pure_diffusion(d);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for _ in 0..100 {
            let before = ens.positions().to_vec();
            ens.step(&model, 0.0, dt).unwrap();
            for (a, b) in before.iter().zip(ens.positions()) {
                for axis in 0..2 {
                    let inc = b[axis] - a[axis];
                    sum += inc;
                    sum_sq += inc * inc;
                    count += 1.0;
                }
            }
        }
        let mean = sum / count;
        let var = sum_sq / count - mean * mean;
        let want = d * d * dt;
        assert!((var / want - 1.0).abs() < 0.05, "variance {var} vs {want}");
    }

    #[test]
    fn reflection_keeps_agents_inside() {
        let grid = unit();
        let mut ens = init_uniform(500, &grid, 5).unwrap();
        let model = ConstantModel {
            velocity: [3.0, -2.0],
            noise: [[0.3, 0.0], [0.0, 0.3]],
        };
        for k in 0..50 {
            ens.step(&model, k as f64 * 0.1, 0.1).unwrap();
            assert!(ens.positions().iter().all(|p| grid.contains(*p)));
        }
        assert_eq!(reflect(1.2, 0.0, 1.0), Some(0.8));
        assert_eq!(reflect(-0.25, 0.0, 1.0), Some(0.25));
        assert_eq!(reflect(25.5, 0.0, 1.0), None);
    }

    #[test]
    fn huge_steps_fail_reflection() {
        let mut ens = init_uniform(3, &unit(), 5).unwrap();
        let model = ConstantModel {
            velocity: [100.0, 0.0],
            noise: [[0.0; 2]; 2],
        };
        assert!(matches!(ens.step(&model, 0.0, 1.0), Err(Error::Reflection { .. })));
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let model = ConstantModel::pure_diffusion(0.05);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut ens = init_uniform(257, &unit(), 99).unwrap();
                for k in 0..20 {
                    ens.step(&model, k as f64 * 0.1, 0.1).unwrap();
                }
                ens
            })
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(1));
    }
}
