//! Euler-Maruyama path simulation with per-path generator streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grids::Partition;
use crate::model::ProblemSpec;
use crate::pde::FeedbackStrategy;
use crate::scalar::Scalar;

/// Initial state: a point mass or a deterministic per-path sampler.
pub enum InitialState<'a, T> {
    Point(T),
    /// Called with the path index; must be deterministic.
    Sampler(&'a (dyn Fn(usize) -> T + Sync)),
}

/// The control applied along simulated paths.
pub enum ControlLaw<'a, T> {
    /// One constant open-loop control.
    Constant(&'a [T]),
    /// Closed-loop feedback from a strategy field.
    Feedback(&'a FeedbackStrategy<T>),
    /// Constant control before `switch_layer`, feedback from it on.
    Spliced {
        head: &'a [T],
        switch_layer: usize,
        tail: &'a FeedbackStrategy<T>,
    },
}

impl<T: Scalar> ControlLaw<'_, T> {
    fn eval(&self, grid: &Partition<T>, layer: usize, x: T, out: &mut [T]) -> Result<()> {
        match self {
            ControlLaw::Constant(u) => out.copy_from_slice(u),
            ControlLaw::Feedback(strategy) => {
                out.copy_from_slice(strategy.at_state(grid.point(layer), x)?)
            }
            ControlLaw::Spliced {
                head,
                switch_layer,
                tail,
            } => {
                if layer < *switch_layer {
                    out.copy_from_slice(head);
                } else {
                    out.copy_from_slice(tail.at_state(grid.point(layer), x)?);
                }
            }
        }
        Ok(())
    }

    pub fn control_dim(&self) -> usize {
        match self {
            ControlLaw::Constant(u) => u.len(),
            ControlLaw::Feedback(s) => s.control_dim,
            ControlLaw::Spliced { head, .. } => head.len(),
        }
    }
}

/// Simulated paths stored time-major: states, Brownian increments, and the
/// controls actually applied, all reproducible from `(seed, grid, law)`.
pub struct SamplePaths<T> {
    pub grid: Partition<T>,
    pub n_paths: usize,
    pub control_dim: usize,
    pub seed: u64,
    states: Vec<T>,
    increments: Vec<T>,
    controls: Vec<T>,
}

impl<T: Scalar> SamplePaths<T> {
    #[inline]
    pub fn state(&self, path: usize, layer: usize) -> T {
        self.states[layer * self.n_paths + path]
    }

    /// Contiguous slice of all states at one layer.
    #[inline]
    pub fn states_at(&self, layer: usize) -> &[T] {
        &self.states[layer * self.n_paths..(layer + 1) * self.n_paths]
    }

    #[inline]
    pub fn increment(&self, path: usize, layer: usize) -> T {
        self.increments[layer * self.n_paths + path]
    }

    pub fn increments_at(&self, layer: usize) -> &[T] {
        &self.increments[layer * self.n_paths..(layer + 1) * self.n_paths]
    }

    #[inline]
    pub fn control(&self, path: usize, layer: usize) -> &[T] {
        let m = self.control_dim;
        let idx = (layer * self.n_paths + path) * m;
        &self.controls[idx..idx + m]
    }

    pub fn num_steps(&self) -> usize {
        self.grid.num_points() - 1
    }

    /// Empirical mean of all increments, normalized by the `4/√(paths·steps)`
    /// law-of-large-numbers budget the type promises.
    pub fn increment_mean_in_budget(&self) -> bool {
        let total = self.increments.len();
        let mean = self
            .increments
            .iter()
            .fold(T::zero(), |a, b| a + *b)
            / T::of_usize(total);
        let dt_scale = (self.grid.mesh()).sqrt();
        let budget = T::c(4.0) / T::of_usize(total).sqrt() * dt_scale;
        mean.abs() <= budget
    }
}

/// Euler-Maruyama simulation of the controlled state equation on `grid`.
///
/// Increments are drawn per path from stream `path + 1` of the seed before
/// the state march, so two simulations with the same `(seed, grid, n_paths)`
/// share their noise regardless of the control law.
pub fn simulate_sde<T: Scalar>(
    spec: &ProblemSpec<T>,
    law: &ControlLaw<'_, T>,
    initial: &InitialState<'_, T>,
    grid: &Partition<T>,
    n_paths: usize,
    seed: u64,
) -> Result<SamplePaths<T>> {
    if spec.dynamics.state_dim != 1 || spec.dynamics.noise_dim != 1 {
        return Err(Error::unsupported(
            "path simulation is limited to one state and one noise dimension in this release",
        ));
    }
    if n_paths == 0 {
        return Err(Error::domain("path count must be positive"));
    }
    let m = law.control_dim();
    if m != spec.controls.control_dim() {
        return Err(Error::grid_mismatch("control law dimension mismatch"));
    }
    let steps = grid.num_points() - 1;
    let mut states = vec![T::zero(); (steps + 1) * n_paths];
    let mut increments = vec![T::zero(); steps * n_paths];
    let mut controls = vec![T::zero(); (steps + 1) * n_paths * m];

    // per-path noise, independent of the control law; drawn path-major from
    // stream `p + 1`, then transposed into the time-major layout
    let chunk = 4096usize;
    {
        let mut by_path = vec![T::zero(); steps * n_paths];
        by_path.par_chunks_mut(steps).enumerate().for_each(|(p, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64 + 1);
            for (j, cell) in row.iter_mut().enumerate() {
                let dt = grid.point(j + 1) - grid.point(j);
                *cell = dt.sqrt() * T::c(normal_draw(&mut rng));
            }
        });
        for p in 0..n_paths {
            for j in 0..steps {
                increments[j * n_paths + p] = by_path[p * steps + j];
            }
        }
    }

    for p in 0..n_paths {
        states[p] = match initial {
            InitialState::Point(x) => *x,
            InitialState::Sampler(f) => f(p),
        };
    }

    // time-major state march; each layer is path-parallel with disjoint writes
    for j in 0..steps {
        let t = grid.point(j);
        let dt = grid.point(j + 1) - grid.point(j);
        let (head, tail) = states.split_at_mut((j + 1) * n_paths);
        let current = &head[j * n_paths..];
        let next = &mut tail[..n_paths];
        let incr = &increments[j * n_paths..(j + 1) * n_paths];
        let ctrl = &mut controls[j * n_paths * m..(j + 1) * n_paths * m];
        let results: Vec<Result<()>> = next
            .par_chunks_mut(chunk)
            .zip(ctrl.par_chunks_mut(chunk * m))
            .enumerate()
            .map(|(c, (xs_next, us))| {
                let base = c * chunk;
                let mut b = [T::zero()];
                let mut sig = [T::zero()];
                for off in 0..xs_next.len() {
                    let p = base + off;
                    let x = current[p];
                    let u = &mut us[off * m..(off + 1) * m];
                    law.eval(grid, j, x, u)?;
                    (spec.dynamics.drift)(t, &[x], u, &mut b);
                    (spec.dynamics.diffusion)(t, &[x], u, &mut sig);
                    let xn = x + b[0] * dt + sig[0] * incr[p];
                    if !xn.is_finite() {
                        return Err(Error::BlowUp { path: p, step: j });
                    }
                    xs_next[off] = xn;
                }
                Ok(())
            })
            .collect();
        for r in results {
            r?;
        }
    }
    // controls at the final layer, for closed-loop readouts
    {
        let j = steps;
        let current = &states[j * n_paths..(j + 1) * n_paths];
        let ctrl = &mut controls[j * n_paths * m..(j + 1) * n_paths * m];
        for p in 0..n_paths {
            let layer = if j > 0 { j - 1 } else { j };
            law.eval(grid, layer, current[p], &mut ctrl[p * m..(p + 1) * m])?;
        }
    }

    Ok(SamplePaths {
        grid: grid.clone(),
        n_paths,
        control_dim: m,
        seed,
        states,
        increments,
        controls,
    })
}

/// Standard normal draw used by every simulation; `f64` internally so the
/// stream is identical across scalar widths.
fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ControlSet, ControlledDynamics, CostSpec};

    fn spec(
        drift: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> ProblemSpec<f64> {
        ProblemSpec {
            dynamics: ControlledDynamics {
                drift: Box::new(drift),
                diffusion: Box::new(diffusion),
                state_dim: 1,
                noise_dim: 1,
                sigma_control_free: true,
            },
            cost: CostSpec {
                generator: Box::new(|_, _, _, _, _, _| 0.0),
                free_term: Box::new(|_, x| x[0]),
                time_homogeneous_in_t: true,
            },
            controls: ControlSet::Finite(vec![vec![0.0]]),
            kernel: None,
            horizon: 1.0,
            minimizer: None,
            golden_refine: false,
        }
    }

    #[test]
    fn frozen_dynamics_keep_the_initial_state() {
        let spec = spec(|_, _, _, out| out[0] = 0.0, |_, _, _, out| out[0] = 0.0);
        let grid = Partition::uniform(0.0, 1.0, 16).unwrap();
        let paths = simulate_sde(
            &spec,
            &ControlLaw::Constant(&[0.0]),
            &InitialState::Point(0.7),
            &grid,
            64,
            11,
        )
        .unwrap();
        for p in 0..64 {
            for j in 0..=16 {
                assert_eq!(paths.state(p, j), 0.7);
            }
        }
    }

    #[test]
    fn brownian_moments_match_at_scale() {
        let spec = spec(|_, _, _, out| out[0] = 0.0, |_, _, _, out| out[0] = 1.0);
        let grid = Partition::uniform(0.0, 1.0, 64).unwrap();
        let n = 100_000;
        let paths = simulate_sde(
            &spec,
            &ControlLaw::Constant(&[0.0]),
            &InitialState::Point(0.0),
            &grid,
            n,
            42,
        )
        .unwrap();
        let last = paths.states_at(64);
        let mean: f64 = last.iter().sum::<f64>() / n as f64;
        let var: f64 = last.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.1 * 1.0, "variance {var}");
        assert!(paths.increment_mean_in_budget());
    }

    #[test]
    fn deterministic_decay_matches_the_scalar_ode() {
        // dX = −X dr from 1.0: X(1) = e^{−1} with O(Δt) Euler bias.
        let spec = spec(|_, x, _, out| out[0] = -x[0], |_, _, _, out| out[0] = 0.0);
        let grid = Partition::uniform(0.0, 1.0, 200).unwrap();
        let paths = simulate_sde(
            &spec,
            &ControlLaw::Constant(&[0.0]),
            &InitialState::Point(1.0),
            &grid,
            2,
            1,
        )
        .unwrap();
        let expect = (-1.0f64).exp();
        let err = (paths.state(0, 200) - expect).abs();
        assert!(err < 2.0 / 200.0, "err {err}");
    }

    #[test]
    fn same_seed_shares_noise_across_control_laws() {
        let s = spec(|_, _, u, out| out[0] = u[0], |_, _, _, out| out[0] = 1.0);
        let grid = Partition::uniform(0.0, 1.0, 8).unwrap();
        let a = simulate_sde(
            &s,
            &ControlLaw::Constant(&[0.0]),
            &InitialState::Point(0.0),
            &grid,
            16,
            5,
        )
        .unwrap();
        let b = simulate_sde(
            &s,
            &ControlLaw::Constant(&[1.0]),
            &InitialState::Point(0.0),
            &grid,
            16,
            5,
        )
        .unwrap();
        for p in 0..16 {
            for j in 0..8 {
                assert_eq!(a.increment(p, j), b.increment(p, j));
            }
        }
    }
}
