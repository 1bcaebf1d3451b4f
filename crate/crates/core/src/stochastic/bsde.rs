//! Backward-equation solver by least-squares regression.
//!
//! The march keeps two objects per layer: the fitted conditional-expectation
//! function (fed to the generator and read out as the per-path solution
//! value) and a pathwise accumulator whose start-layer mean is the
//! low-noise value estimate. The second component is regressed against the
//! centered increment product, which removes the dominant noise term without
//! changing the projection target.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::paths::SamplePaths;
use super::regression::{fit_poly, PolyFit, RegressionBasis};

/// Which per-path solution values the march keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetainValues {
    None,
    StartLayer,
    All,
}

#[derive(Debug, Clone, Copy)]
pub struct BsdeOptions {
    pub basis: RegressionBasis,
    /// Regress the second component; otherwise generators see zero there.
    pub need_z: bool,
    pub retain: RetainValues,
}

impl Default for BsdeOptions {
    fn default() -> Self {
        BsdeOptions {
            basis: RegressionBasis::default(),
            need_z: true,
            retain: RetainValues::StartLayer,
        }
    }
}

/// Output of one backward march over `[grid[start], T]`.
pub struct BsdeSolution<T> {
    pub start: usize,
    /// Fitted continuation means per layer `start..last` (offset indexed).
    pub y_fits: Vec<PolyFit<T>>,
    /// Fitted second components per layer `start..last`; empty if unused.
    pub z_fits: Vec<PolyFit<T>>,
    /// Per-path solution values, layout `[(j − start)·n_paths + p]`, present
    /// per the retain option (start layer only, or all layers).
    pub values: Vec<T>,
    /// Per-path accumulators at the start layer.
    pub start_accumulators: Vec<T>,
    /// Mean and standard error of the start-layer accumulators.
    pub value_mean: T,
    pub value_se: T,
}

impl<T: Scalar> BsdeSolution<T> {
    /// Per-path solution value at `layer` (requires `RetainValues::All`, or
    /// the start layer).
    pub fn value(&self, n_paths: usize, path: usize, layer: usize) -> T {
        let off = layer - self.start;
        self.values[off * n_paths + path]
    }

    pub fn z_fit(&self, layer: usize) -> &PolyFit<T> {
        &self.z_fits[layer - self.start]
    }

    pub fn y_fit(&self, layer: usize) -> &PolyFit<T> {
        &self.y_fits[layer - self.start]
    }
}

/// Generic backward march. `terminal(p)` is the final value per path;
/// `generator(p, j, y_fitted, z_fitted)` the driver rate at the left node of
/// step `j` with the fitted arguments of that layer.
pub fn solve_backward<T: Scalar>(
    paths: &SamplePaths<T>,
    start: usize,
    terminal: &(dyn Fn(usize) -> T + Sync),
    generator: &(dyn Fn(usize, usize, T, T) -> T + Sync),
    opts: &BsdeOptions,
) -> Result<BsdeSolution<T>> {
    let last = paths.num_steps();
    if start > last {
        return Err(Error::domain("backward march start beyond the grid"));
    }
    let n = paths.n_paths;
    let span = last - start + 1;
    let retain_all = opts.retain == RetainValues::All;

    let mut acc = vec![T::zero(); n];
    acc.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
        for (off, a) in chunk.iter_mut().enumerate() {
            *a = terminal(c * 4096 + off);
        }
    });
    let mut values = if retain_all {
        let mut v = vec![T::zero(); span * n];
        v[(span - 1) * n..].copy_from_slice(&acc);
        v
    } else {
        Vec::new()
    };

    let mut y_fits: Vec<PolyFit<T>> = Vec::with_capacity(span - 1);
    let mut z_fits: Vec<PolyFit<T>> = Vec::with_capacity(if opts.need_z { span - 1 } else { 0 });
    let mut cont = vec![T::zero(); n];
    let mut zvals = vec![T::zero(); n];
    let mut ztargets = vec![T::zero(); n];

    for j in (start..last).rev() {
        let xs = paths.states_at(j);
        let dt = paths.grid.point(j + 1) - paths.grid.point(j);
        let y_fit = fit_poly(xs, &acc, opts.basis, None)?;
        y_fit.eval_into(xs, &mut cont);

        if opts.need_z {
            let incr = paths.increments_at(j);
            ztargets
                .par_chunks_mut(4096)
                .zip(acc.par_chunks(4096))
                .zip(cont.par_chunks(4096))
                .zip(incr.par_chunks(4096))
                .for_each(|(((zt, a), c), w)| {
                    for i in 0..zt.len() {
                        zt[i] = (a[i] - c[i]) * w[i] / dt;
                    }
                });
            let z_fit = fit_poly(xs, &ztargets, opts.basis, None)?;
            z_fit.eval_into(xs, &mut zvals);
            z_fits.push(z_fit);
        } else {
            zvals.iter_mut().for_each(|v| *v = T::zero());
        }

        // one generator evaluation per path feeds both the accumulator and
        // the retained fitted value
        let results: Vec<Result<()>> = acc
            .par_chunks_mut(4096)
            .zip(cont.par_chunks_mut(4096))
            .zip(zvals.par_chunks(4096))
            .enumerate()
            .map(|(c, ((ac, co), zv))| {
                let base = c * 4096;
                for i in 0..ac.len() {
                    let p = base + i;
                    let g = generator(p, j, co[i], zv[i]);
                    if !g.is_finite() {
                        return Err(Error::eval(format!(
                            "generator not finite at path {p}, layer {j}"
                        )));
                    }
                    ac[i] += dt * g;
                    co[i] += dt * g; // fitted value f_j = m_j + Δt·g
                }
                Ok(())
            })
            .collect();
        for r in results {
            r?;
        }
        if retain_all {
            values[(j - start) * n..(j - start + 1) * n].copy_from_slice(&cont);
        }
        y_fits.push(y_fit);
    }
    y_fits.reverse();
    z_fits.reverse();

    if opts.retain == RetainValues::StartLayer {
        values = if start == last {
            acc.clone()
        } else {
            cont.clone()
        };
    }

    let nn = T::of_usize(n);
    let mean = acc.iter().fold(T::zero(), |a, b| a + *b) / nn;
    let var = acc
        .iter()
        .fold(T::zero(), |a, b| a + (*b - mean) * (*b - mean))
        / nn;
    let se = (var / nn).sqrt();
    Ok(BsdeSolution {
        start,
        y_fits,
        z_fits,
        values,
        start_accumulators: acc,
        value_mean: mean,
        value_se: se,
    })
}

/// Backward-equation solve along simulated paths with a plain generator
/// `g(r, x, u, y, z)` and terminal map; returns fitted layers plus per-path
/// values at every time.
pub fn solve_bsde_lsmc<T: Scalar>(
    paths: &SamplePaths<T>,
    generator: &(dyn Fn(T, T, &[T], T, &[T]) -> T + Sync),
    terminal: &(dyn Fn(&[T]) -> T + Sync),
    basis: RegressionBasis,
) -> Result<BsdeSolution<T>> {
    let last = paths.num_steps();
    let opts = BsdeOptions {
        basis,
        need_z: true,
        retain: RetainValues::All,
    };
    solve_backward(
        paths,
        0,
        &|p| terminal(&[paths.state(p, last)]),
        &|p, j, y, z| {
            let r = paths.grid.point(j);
            let x = paths.state(p, j);
            generator(r, x, paths.control(p, j), y, &[z])
        },
        &opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::Partition;
    use crate::model::{ControlSet, ControlledDynamics, CostSpec, ProblemSpec};
    use crate::stochastic::paths::{simulate_sde, ControlLaw, InitialState};

    fn brownian_paths(n: usize, steps: usize, seed: u64) -> SamplePaths<f64> {
        let spec = ProblemSpec {
            dynamics: ControlledDynamics {
                drift: Box::new(|_, _, _, out: &mut [f64]| out[0] = 0.0),
                diffusion: Box::new(|_, _, _, out: &mut [f64]| out[0] = 1.0),
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
        };
        let grid = Partition::uniform(0.0, 1.0, steps).unwrap();
        simulate_sde(
            &spec,
            &ControlLaw::Constant(&[0.0]),
            &InitialState::Point(0.0),
            &grid,
            n,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn constant_terminal_with_zero_generator_is_flat() {
        let paths = brownian_paths(20_000, 50, 3);
        let sol = solve_bsde_lsmc(
            &paths,
            &|_r, _x, _u, _y, _z| 0.0,
            &|_x| 2.5,
            RegressionBasis::default(),
        )
        .unwrap();
        assert!((sol.value_mean - 2.5).abs() < 1e-12);
        let noise = 5.0 / (20_000f64).sqrt();
        for j in 0..50 {
            let z = sol.z_fit(j);
            for &x in &[-0.5, 0.0, 0.5] {
                assert!(z.eval(x).abs() <= noise, "z {} at layer {j}", z.eval(x));
            }
        }
    }

    #[test]
    fn linear_decay_generator_matches_the_exponential() {
        // g = −λy, terminal 1 → Y(r) = e^{−λ(1−r)}
        let lambda = 0.8;
        let paths = brownian_paths(100_000, 100, 7);
        let sol = solve_bsde_lsmc(
            &paths,
            &|_r, _x, _u, y, _z| -lambda * y,
            &|_x| 1.0,
            RegressionBasis::default(),
        )
        .unwrap();
        let expect = (-lambda * 1.0f64).exp();
        assert!(
            (sol.value_mean - expect).abs() <= 1e-2,
            "Y(0) = {} vs {expect}",
            sol.value_mean
        );
        // interior layer read from the retained values
        let j = 50;
        let want = (-lambda * 0.5f64).exp();
        let got = sol.value(paths.n_paths, 17, j);
        assert!((got - want).abs() <= 1e-2, "Y(0.5) = {got} vs {want}");
    }

    #[test]
    fn brownian_martingale_has_unit_second_component() {
        let paths = brownian_paths(100_000, 50, 11);
        let sol = solve_bsde_lsmc(
            &paths,
            &|_r, _x, _u, _y, _z| 0.0,
            &|x| x[0],
            RegressionBasis::default(),
        )
        .unwrap();
        // Y_r ≈ X_r and Z ≈ 1
        let j = 25;
        for p in [0usize, 333, 4444] {
            let got = sol.value(paths.n_paths, p, j);
            assert!((got - paths.state(p, j)).abs() < 2e-2);
        }
        let z = sol.z_fit(j);
        for &x in &[-0.6, 0.0, 0.6] {
            assert!((z.eval(x) - 1.0).abs() < 2e-2, "z = {}", z.eval(x));
        }
    }
}
