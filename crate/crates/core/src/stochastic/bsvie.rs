//! Backward Volterra solver: a parameterized family of backward equations,
//! one per outer grid time, Picard-iterated through the diagonal coupling
//! `Y(s) = y(s, s)`, plus the outer-time-frozen modification and its exact
//! structural fast path.

use num_traits::NumCast;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::bsde::{solve_backward, BsdeOptions, RetainValues};
use super::paths::SamplePaths;
use super::regression::{fit_poly, PolyFit, RegressionBasis};

#[derive(Debug, Clone, Copy)]
pub struct BsvieOptions {
    pub basis: RegressionBasis,
    pub picard_max: usize,
    pub tolerance: f64,
    /// The generator reads its `z` argument (skipping the extra regression
    /// when it provably does not is a large saving).
    pub generator_uses_z: bool,
    /// Keep the fitted second-component triangle for residual checks.
    pub retain_z: bool,
}

impl Default for BsvieOptions {
    fn default() -> Self {
        BsvieOptions {
            basis: RegressionBasis::default(),
            picard_max: 25,
            tolerance: 1e-8,
            generator_uses_z: true,
            retain_z: true,
        }
    }
}

/// Adapted solution estimate of a backward Volterra equation along simulated
/// paths: per-path first-component values on the grid and the fitted
/// second-component triangle.
pub struct AdaptedPair<T> {
    pub start: usize,
    pub n_paths: usize,
    pub basis: RegressionBasis,
    pub sweeps: usize,
    pub residual_history: Vec<f64>,
    /// First-component values `[(j − start)·n_paths + p]`.
    y_diag: Vec<T>,
    /// Fitted `z(s_j, ·)` per outer layer; row `j` holds fits for inner
    /// layers `j..last`.
    z_rows: Vec<Vec<PolyFit<T>>>,
    /// Per-path accumulators of the outer-start equation (CRN-friendly).
    pub start_accumulators: Vec<T>,
    pub value_mean: T,
    pub value_se: T,
}

impl<T: Scalar> AdaptedPair<T> {
    /// Y(s_j) for one path.
    #[inline]
    pub fn y_value(&self, path: usize, layer: usize) -> T {
        self.y_diag[(layer - self.start) * self.n_paths + path]
    }

    pub fn y_layer(&self, layer: usize) -> &[T] {
        let off = layer - self.start;
        &self.y_diag[off * self.n_paths..(off + 1) * self.n_paths]
    }

    /// Z(s_j, t_r) for one path; defined on the triangle `r ≥ j` only.
    pub fn z_value(&self, paths: &SamplePaths<T>, path: usize, outer: usize, inner: usize) -> T {
        assert!(
            outer >= self.start && inner >= outer,
            "second component read off the triangle: outer {outer}, inner {inner}"
        );
        let row = &self.z_rows[outer - self.start];
        if row.is_empty() {
            panic!("second-component triangle was not retained");
        }
        row[inner - outer].eval(paths.state(path, inner))
    }

    pub fn has_z(&self) -> bool {
        self.z_rows.iter().any(|r| !r.is_empty())
    }
}

/// Solve the backward Volterra equation with generator
/// `g(s, r, x, u, Y(r), z(s, r))` and free term `h(s, x)` along `paths`.
///
/// Per sweep, each outer time solves a backward equation in the inner time
/// whose recursion argument is the previous sweep's diagonal; sweeps stop
/// when the diagonal settles in the sup norm.
pub fn solve_bsvie<T: Scalar>(
    paths: &SamplePaths<T>,
    generator: impl Fn(T, T, &[T], &[T], T, &[T]) -> T + Sync,
    free_term: impl Fn(T, &[T]) -> T + Sync,
    start: usize,
    opts: &BsvieOptions,
) -> Result<AdaptedPair<T>> {
    let last = paths.num_steps();
    let n = paths.n_paths;
    let span = last - start + 1;

    // initial guess: conditional expectation of the own-time free term
    let mut diag = vec![T::zero(); span * n];
    for j in start..=last {
        let s_j = paths.grid.point(j);
        let xs_t: Vec<T> = (0..n)
            .map(|p| free_term(s_j, &[paths.state(p, last)]))
            .collect();
        let off = (j - start) * n;
        if j == last {
            diag[off..off + n].copy_from_slice(&xs_t);
        } else {
            let fit = fit_poly(paths.states_at(j), &xs_t, opts.basis, None)?;
            for p in 0..n {
                diag[off + p] = fit.eval(paths.state(p, j));
            }
        }
    }

    let mut z_rows: Vec<Vec<PolyFit<T>>> = vec![Vec::new(); span];
    let mut history = Vec::new();
    let mut sweeps = 0;
    let mut value_mean = T::zero();
    let mut value_se = T::zero();
    let mut start_accumulators = vec![T::zero(); n];

    while sweeps < opts.picard_max {
        sweeps += 1;
        let mut new_diag = vec![T::zero(); span * n];
        // terminal layer is exact per path
        for p in 0..n {
            let x = [paths.state(p, last)];
            new_diag[(span - 1) * n + p] = free_term(paths.grid.point(last), &x);
        }
        for j in (start..last).rev() {
            let s_j = paths.grid.point(j);
            let bsde_opts = BsdeOptions {
                basis: opts.basis,
                need_z: opts.generator_uses_z || opts.retain_z,
                retain: RetainValues::StartLayer,
            };
            let diag_ref = &diag;
            let sol = solve_backward(
                paths,
                j,
                &|p| free_term(s_j, &[paths.state(p, last)]),
                &|p, r, _y_own, z| {
                    let t_r = paths.grid.point(r);
                    let x = [paths.state(p, r)];
                    let y_vol = diag_ref[(r - start) * n + p];
                    generator(s_j, t_r, &x, paths.control(p, r), y_vol, &[z])
                },
                &bsde_opts,
            )?;
            new_diag[(j - start) * n..(j - start + 1) * n].copy_from_slice(&sol.values);
            if opts.retain_z {
                z_rows[j - start] = sol.z_fits;
            }
            if j == start {
                value_mean = sol.value_mean;
                value_se = sol.value_se;
                start_accumulators = sol.start_accumulators;
            }
        }
        let residual = diag
            .iter()
            .zip(&new_diag)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        diag = new_diag;
        let res_f: f64 = NumCast::from(residual).unwrap_or(f64::NAN);
        history.push(res_f);
        if res_f < opts.tolerance {
            if start == last {
                // degenerate single-point window: mean of the exact terminal
                let nn = T::of_usize(n);
                value_mean = diag.iter().fold(T::zero(), |a, b| a + *b) / nn;
                let var = diag
                    .iter()
                    .fold(T::zero(), |a, b| a + (*b - value_mean) * (*b - value_mean))
                    / nn;
                value_se = (var / nn).sqrt();
                start_accumulators = diag.clone();
            }
            return Ok(AdaptedPair {
                start,
                n_paths: n,
                basis: opts.basis,
                sweeps,
                residual_history: history,
                y_diag: diag,
                z_rows,
                start_accumulators,
                value_mean,
                value_se,
            });
        }
    }
    Err(Error::NonConvergence {
        sweeps,
        history,
    })
}

/// Solve the modification whose outer argument is frozen to `grid[anchor]`
/// on `[anchor, eps_layer]`.
///
/// The structural fast path copies the unmodified solution above the frozen
/// band and solves one backward equation on the band: its recursion argument
/// is the unmodified diagonal beyond `eps_layer` and its own fitted value
/// inside. With `fast = false` the full Volterra solve runs on the modified
/// coefficients instead.
pub fn solve_modified_bsvie<T: Scalar>(
    paths: &SamplePaths<T>,
    generator: impl Fn(T, T, &[T], &[T], T, &[T]) -> T + Sync,
    free_term: impl Fn(T, &[T]) -> T + Sync,
    base: &AdaptedPair<T>,
    anchor: usize,
    eps_layer: usize,
    opts: &BsvieOptions,
    fast: bool,
) -> Result<AdaptedPair<T>> {
    let last = paths.num_steps();
    let start = base.start;
    if anchor < start || eps_layer < anchor || eps_layer > last {
        return Err(Error::domain(
            "frozen band must sit inside the solved window",
        ));
    }
    let t_anchor = paths.grid.point(anchor);
    let eps_time = paths.grid.point(eps_layer);

    if !fast {
        let frozen_gen = |s: T, r: T, x: &[T], u: &[T], y: T, z: &[T]| -> T {
            let outer = if s <= eps_time { t_anchor } else { s };
            generator(outer, r, x, u, y, z)
        };
        let frozen_free = |s: T, x: &[T]| -> T {
            let outer = if s <= eps_time { t_anchor } else { s };
            free_term(outer, x)
        };
        return solve_bsvie(paths, frozen_gen, frozen_free, start, opts);
    }

    // fast path: one backward equation on [anchor, T]
    let n = paths.n_paths;
    let bsde_opts = BsdeOptions {
        basis: opts.basis,
        need_z: opts.generator_uses_z || opts.retain_z,
        retain: RetainValues::All,
    };
    let sol = solve_backward(
        paths,
        anchor,
        &|p| free_term(t_anchor, &[paths.state(p, last)]),
        &|p, r, y_own, z| {
            let t_r = paths.grid.point(r);
            let x = [paths.state(p, r)];
            let y_slot = if r > eps_layer { base.y_value(p, r) } else { y_own };
            generator(t_anchor, t_r, &x, paths.control(p, r), y_slot, &[z])
        },
        &bsde_opts,
    )?;

    let span = last - start + 1;
    let mut diag = vec![T::zero(); span * n];
    for j in start..=last {
        let off = (j - start) * n;
        if j <= eps_layer && j >= anchor {
            diag[off..off + n].copy_from_slice(&sol.values[(j - anchor) * n..(j - anchor + 1) * n]);
        } else {
            diag[off..off + n].copy_from_slice(base.y_layer(j));
        }
    }
    let mut z_rows: Vec<Vec<PolyFit<T>>> = vec![Vec::new(); span];
    if opts.retain_z {
        for j in start..=last {
            if j <= eps_layer && j >= anchor {
                // the frozen band's second component is outer-independent
                z_rows[j - start] = sol.z_fits[(j - anchor)..].to_vec();
            } else if base.has_z() {
                z_rows[j - start] = base.z_rows[j - start].clone();
            }
        }
    }
    Ok(AdaptedPair {
        start,
        n_paths: n,
        basis: opts.basis,
        sweeps: 1,
        residual_history: vec![0.0],
        y_diag: diag,
        z_rows,
        start_accumulators: sol.start_accumulators,
        value_mean: sol.value_mean,
        value_se: sol.value_se,
    })
}
