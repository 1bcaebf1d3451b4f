//! Finite-difference marches for the representation equation, the frozen
//! single-parameter equation, the classical window HJB, and the equilibrium
//! HJB whose Hamiltonian arguments couple through the field's own diagonal.
//!
//! All marches walk the inner time backward from the horizon. Diagonal
//! arguments are taken from the previously computed layer (lagged one step),
//! which turns the non-local equation into a sequence of local updates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grids::{spatial_derivatives, Partition, ScalarField, SpatialGrid, ThetaField};
use crate::model::{HamiltonianWorkspace, ProblemSpec};
use crate::scalar::Scalar;

/// Time-stepping scheme of the backward march.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Forward Euler on the reversed clock, guarded by the parabolic CFL
    /// bound `Δs ≤ Δx²/(λ₁·safety)`.
    Explicit,
    /// Diffusion term implicit (tridiagonal solve per row), everything else
    /// explicit; no CFL restriction.
    ImplicitDiffusion,
}

#[derive(Debug, Clone)]
pub struct PdeConfig<T> {
    pub scheme: Scheme,
    pub cfl_safety: T,
    /// Error scale the solve is trusted to; consistency checks compare
    /// against small multiples of this.
    pub tolerance: T,
}

impl<T: Scalar> Default for PdeConfig<T> {
    fn default() -> Self {
        PdeConfig {
            scheme: Scheme::Explicit,
            cfl_safety: T::c(1.05),
            tolerance: T::c(1e-6),
        }
    }
}

/// Whether a solve sits in the regime where the equilibrium equation is known
/// to be classically well-posed (diffusion free of the control).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeFlag {
    ControlFreeDiffusion,
    ControlDependentDiffusion,
}

impl RegimeFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeFlag::ControlFreeDiffusion => "thm-4.2",
            RegimeFlag::ControlDependentDiffusion => "outside-thm-4.2",
        }
    }
}

/// Per-layer progress record emitted by every march.
#[derive(Debug, Clone, Copy)]
pub struct LayerStat<T> {
    pub layer: usize,
    pub max_update: T,
    pub min_value: T,
    pub max_value: T,
}

/// A control field on a (time, space) grid: piecewise constant in time via
/// the floor projection and nearest-node in space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackStrategy<T> {
    pub time: Partition<T>,
    pub space: SpatialGrid<T>,
    pub control_dim: usize,
    /// First time layer at which the strategy is defined.
    pub valid_from: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeedbackStrategy<T> {
    pub fn zeros(
        time: Partition<T>,
        space: SpatialGrid<T>,
        control_dim: usize,
        valid_from: usize,
    ) -> Self {
        let len = time.num_points() * space.len() * control_dim;
        FeedbackStrategy {
            time,
            space,
            control_dim,
            valid_from,
            values: vec![T::zero(); len],
        }
    }

    pub fn from_fn(
        time: Partition<T>,
        space: SpatialGrid<T>,
        control_dim: usize,
        f: impl Fn(T, T, &mut [T]),
    ) -> Self {
        let mut st = FeedbackStrategy::zeros(time, space, control_dim, 0);
        let mut buf = vec![T::zero(); control_dim];
        for j in 0..st.time.num_points() {
            for k in 0..st.space.len() {
                f(st.time.point(j), st.space.node(k), &mut buf);
                st.set(j, k, &buf);
            }
        }
        st
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> &[T] {
        debug_assert!(
            j >= self.valid_from,
            "strategy read below its valid window (layer {j}, valid from {})",
            self.valid_from
        );
        let m = self.control_dim;
        let idx = (j * self.space.len() + k) * m;
        &self.values[idx..idx + m]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, u: &[T]) {
        let m = self.control_dim;
        let idx = (j * self.space.len() + k) * m;
        self.values[idx..idx + m].copy_from_slice(u);
    }

    /// Control applied at continuous time `s` and state `x`.
    pub fn at_state(&self, s: T, x: T) -> Result<&[T]> {
        let j = self.time.floor_index(s)?;
        let j = j.max(self.valid_from);
        Ok(self.get(j, self.space.nearest_index(x)))
    }

    /// The layer slice (nx × m values).
    pub fn layer(&self, j: usize) -> &[T] {
        let m = self.control_dim;
        let nx = self.space.len();
        &self.values[j * nx * m..(j + 1) * nx * m]
    }

    pub fn layer_mut(&mut self, j: usize) -> &mut [T] {
        let m = self.control_dim;
        let nx = self.space.len();
        &mut self.values[j * nx * m..(j + 1) * nx * m]
    }

    pub fn max_abs_diff(&self, other: &FeedbackStrategy<T>) -> Result<T> {
        if self.time != other.time || self.space != other.space {
            return Err(Error::grid_mismatch("strategies on different grids"));
        }
        let from = self.valid_from.max(other.valid_from);
        let nx = self.space.len();
        let m = self.control_dim;
        let lo = from * nx * m;
        Ok(self.values[lo..]
            .iter()
            .zip(&other.values[lo..])
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max))
    }
}

/// Result bundle of an equilibrium solve.
pub struct EquilibriumSolution<T> {
    pub theta: ThetaField<T>,
    pub value: ScalarField<T>,
    pub strategy: FeedbackStrategy<T>,
    pub regime: RegimeFlag,
    /// Set when the generator's recursion slot was fed the row value instead
    /// of the diagonal value (the comparison variant).
    pub wyy_variant: bool,
    pub stats: Vec<LayerStat<T>>,
}

/// Largest diffusion magnitude `σσᵀ` sampled over the grid and control set;
/// the explicit scheme's CFL bound uses it.
pub fn diffusion_bound<T: Scalar>(
    spec: &ProblemSpec<T>,
    window: &Partition<T>,
    space: &SpatialGrid<T>,
) -> T {
    let d = spec.dynamics.noise_dim;
    let mut sigma = vec![T::zero(); d];
    let controls = spec.controls.sample(8, 0x51u64);
    let mut worst = T::zero();
    let stride = (window.num_points() / 16).max(1);
    for j in (0..window.num_points()).step_by(stride) {
        let s = window.point(j);
        for k in 0..space.len() {
            let x = [space.node(k)];
            for u in &controls {
                (spec.dynamics.diffusion)(s, &x, u, &mut sigma);
                let a = sigma.iter().map(|v| *v * *v).fold(T::zero(), |p, q| p + q);
                if a > worst {
                    worst = a;
                }
            }
        }
    }
    worst
}

/// Where the recursion slot (the generator's `y` argument) of a row update
/// reads its value.
#[derive(Clone, Copy)]
pub(crate) enum RecursionSlot {
    /// Θ(s, s, x): the freshly available diagonal (lagged one step).
    Diagonal,
    /// Θ(t, s, x): the row's own lagged value (comparison variant).
    RowValue,
}

pub(crate) struct Marcher<'a, T> {
    pub spec: &'a ProblemSpec<T>,
    pub space: &'a SpatialGrid<T>,
    pub cfg: &'a PdeConfig<T>,
}

impl<'a, T: Scalar> Marcher<'a, T> {
    pub fn new(
        spec: &'a ProblemSpec<T>,
        window: &Partition<T>,
        space: &'a SpatialGrid<T>,
        cfg: &'a PdeConfig<T>,
    ) -> Result<Self> {
        if spec.dynamics.state_dim != 1 {
            return Err(Error::unsupported(
                "finite-difference solvers are limited to one spatial dimension in this release",
            ));
        }
        if cfg.scheme == Scheme::Explicit {
            let bound = diffusion_bound(spec, window, space);
            if bound > T::zero() {
                let dx = space.dx();
                let limit = dx * dx / (bound * cfg.cfl_safety);
                let dt = window.mesh();
                if dt > limit {
                    return Err(Error::config(format!(
                        "explicit scheme violates the CFL bound: dt = {dt} > {limit} \
                         (dx² / (λ₁·safety) with λ₁ = {bound})"
                    )));
                }
            }
        }
        Ok(Marcher { spec, space, cfg })
    }

    /// One backward step of a single row: values at inner layer `j+1` to
    /// layer `j`. `y_next` feeds the recursion slot per node; `controls` is
    /// the `nx × m` control layer at `j+1`.
    #[allow(clippy::too_many_arguments)]
    pub fn advance_row(
        &self,
        ws: &mut HamiltonianWorkspace<T>,
        outer_t: T,
        s_next: T,
        dt: T,
        row_next: &[T],
        y_next: &[T],
        controls: &[T],
        out: &mut [T],
    ) -> Result<()> {
        let nx = self.space.len();
        let m = self.spec.controls.control_dim();
        let dx = self.space.dx();
        match self.cfg.scheme {
            Scheme::Explicit => {
                for k in 0..nx {
                    let (d1, d2) = spatial_derivatives(row_next, k, dx)?;
                    let x = [self.space.node(k)];
                    let u = &controls[k * m..(k + 1) * m];
                    let h = self.spec.hamiltonian_with(
                        ws,
                        outer_t,
                        s_next,
                        &x,
                        u,
                        y_next[k],
                        &[d1],
                        &[d2],
                    )?;
                    out[k] = row_next[k] + dt * h;
                }
            }
            Scheme::ImplicitDiffusion => {
                // rest = p·b + g (trace term dropped via P = 0), diffusion
                // handled by a tridiagonal solve with zero curvature at the
                // boundary.
                let mut rhs = vec![T::zero(); nx];
                let mut diag_a = vec![T::zero(); nx];
                for k in 0..nx {
                    let (d1, _) = spatial_derivatives(row_next, k, dx)?;
                    let x = [self.space.node(k)];
                    let u = &controls[k * m..(k + 1) * m];
                    let rest = self.spec.hamiltonian_with(
                        ws,
                        outer_t,
                        s_next,
                        &x,
                        u,
                        y_next[k],
                        &[d1],
                        &[T::zero()],
                    )?;
                    (self.spec.dynamics.diffusion)(s_next, &x, u, ws.sigma_buffer());
                    let a = ws
                        .sigma_buffer()
                        .iter()
                        .map(|v| *v * *v)
                        .fold(T::zero(), |p, q| p + q);
                    diag_a[k] = a;
                    rhs[k] = row_next[k] + dt * rest;
                }
                solve_diffusion_tridiagonal(&diag_a, &rhs, dt, dx, out);
            }
        }
        Ok(())
    }
}

/// Thomas solve of `(I − dt·½aD²)v = rhs` with identity boundary rows.
fn solve_diffusion_tridiagonal<T: Scalar>(a: &[T], rhs: &[T], dt: T, dx: T, out: &mut [T]) {
    let nx = rhs.len();
    let c = dt / (T::two() * dx * dx);
    let mut sub = vec![T::zero(); nx];
    let mut diag = vec![T::one(); nx];
    let mut sup = vec![T::zero(); nx];
    for k in 1..nx - 1 {
        sub[k] = -c * a[k];
        diag[k] = T::one() + T::two() * c * a[k];
        sup[k] = -c * a[k];
    }
    // forward sweep
    let mut d = diag.to_vec();
    let mut r = rhs.to_vec();
    for k in 1..nx {
        let w = sub[k] / d[k - 1];
        d[k] = d[k] - w * sup[k - 1];
        r[k] = r[k] - w * r[k - 1];
    }
    out[nx - 1] = r[nx - 1] / d[nx - 1];
    for k in (0..nx - 1).rev() {
        out[k] = (r[k] - sup[k] * out[k + 1]) / d[k];
    }
}

fn layer_stat<T: Scalar>(layer: usize, prev: &[T], next: &[T]) -> Result<LayerStat<T>> {
    let mut max_update = T::zero();
    let mut min_value = T::infinity();
    let mut max_value = T::neg_infinity();
    for (p, n) in prev.iter().zip(next) {
        if !n.is_finite() {
            return Err(Error::Divergence {
                layer,
                detail: "non-finite layer value".into(),
            });
        }
        max_update = max_update.max((*n - *p).abs());
        min_value = min_value.min(*n);
        max_value = max_value.max(*n);
    }
    Ok(LayerStat {
        layer,
        max_update,
        min_value,
        max_value,
    })
}

fn derivative_arrays<T: Scalar>(values: &[T], dx: T) -> Result<(Vec<T>, Vec<T>)> {
    let mut first = vec![T::zero(); values.len()];
    let mut second = vec![T::zero(); values.len()];
    for k in 0..values.len() {
        let (d1, d2) = spatial_derivatives(values, k, dx)?;
        first[k] = d1;
        second[k] = d2;
    }
    Ok((first, second))
}

/// Fill the control layer at `(s_j, s_j)` by pointwise Hamiltonian
/// minimization at diagonal arguments.
fn minimize_layer<T: Scalar>(
    spec: &ProblemSpec<T>,
    space: &SpatialGrid<T>,
    s: T,
    diag: &[T],
    d1: &[T],
    d2: &[T],
    out: &mut [T],
) -> Result<()> {
    let m = spec.controls.control_dim();
    let mut ws = HamiltonianWorkspace::new(spec.dynamics.state_dim, spec.dynamics.noise_dim);
    for k in 0..space.len() {
        let x = [space.node(k)];
        let min = spec.minimize_hamiltonian_with(&mut ws, s, s, &x, diag[k], &[d1[k]], &[d2[k]])?;
        out[k * m..(k + 1) * m].copy_from_slice(&min.control);
    }
    Ok(())
}

/// Advance rows `first_row..=last_row` of a triangular field from layer
/// `j+1` to layer `j` (`last_row ≤ j`).
///
/// Rows are updated in parallel; each owns disjoint storage, so the result
/// is bit-identical for any worker count.
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance_triangle_layer<T: Scalar>(
    marcher: &Marcher<'_, T>,
    theta: &mut ThetaField<T>,
    grid: &Partition<T>,
    j: usize,
    first_row: usize,
    last_row: usize,
    y_source: RecursionSlot,
    diag_override: Option<&[T]>,
    controls: &[T],
) -> Result<LayerStat<T>> {
    debug_assert!(first_row <= last_row && last_row <= j);
    let nx = marcher.space.len();
    let s_next = grid.point(j + 1);
    let dt = s_next - grid.point(j);
    let diag_next: Vec<T> = match diag_override {
        Some(d) => d.to_vec(),
        None => theta.row_layer(j + 1, j + 1).to_vec(),
    };

    let rows = theta.rows_mut();
    let results: Vec<Result<LayerStat<T>>> = rows[first_row..=last_row]
        .par_iter_mut()
        .enumerate()
        .map(|(offset, row)| {
            let i = first_row + offset;
            let outer_t = grid.point(i);
            // layer j occupies [(j−i)·nx, (j−i+1)·nx), layer j+1 follows it
            let split = (j - i + 1) * nx;
            let (head, tail) = row.split_at_mut(split);
            let out = &mut head[(j - i) * nx..];
            let row_next = &tail[..nx];
            let mut ws =
                HamiltonianWorkspace::new(marcher.spec.dynamics.state_dim, marcher.spec.dynamics.noise_dim);
            let y_next: &[T] = match y_source {
                RecursionSlot::Diagonal => &diag_next,
                RecursionSlot::RowValue => row_next,
            };
            marcher.advance_row(&mut ws, outer_t, s_next, dt, row_next, y_next, controls, out)?;
            layer_stat(j, row_next, out)
        })
        .collect();

    let mut stat = LayerStat {
        layer: j,
        max_update: T::zero(),
        min_value: T::infinity(),
        max_value: T::neg_infinity(),
    };
    for r in results {
        let s = r?;
        stat.max_update = stat.max_update.max(s.max_update);
        stat.min_value = stat.min_value.min(s.min_value);
        stat.max_value = stat.max_value.max(s.max_value);
    }
    Ok(stat)
}

/// Write the terminal rows `Θ(t_i, T, ·) = h(t_i, ·)` for `first_row..end_row`.
pub(crate) fn fill_terminal_rows<T: Scalar>(
    spec: &ProblemSpec<T>,
    theta: &mut ThetaField<T>,
    first_row: usize,
    end_row: usize,
) {
    let m = theta.time.num_points() - 1;
    for i in first_row..end_row.min(m + 1) {
        let t = theta.time.point(i);
        for k in 0..theta.space.len() {
            let x = [theta.space.node(k)];
            let v = (spec.cost.free_term)(t, &x);
            theta.set(i, m, k, v);
        }
    }
}

/// Solve the representation equation for a given strategy on a window:
/// `Θ_s + ℍ(t, s, x, Ψ(s,x), Θ(s,s,x), Θ_x, Θ_xx) = 0`, `Θ(t,T,x) = h(t,x)`.
///
/// When `diagonal_source` is given it feeds the recursion slot; otherwise the
/// field's own (lagged) diagonal is used.
pub fn solve_representation_pde<T: Scalar>(
    spec: &ProblemSpec<T>,
    strategy: &FeedbackStrategy<T>,
    window: &Partition<T>,
    space: &SpatialGrid<T>,
    diagonal_source: Option<&ScalarField<T>>,
    cfg: &PdeConfig<T>,
) -> Result<(ThetaField<T>, Vec<LayerStat<T>>)> {
    if strategy.time != *window || strategy.space != *space {
        return Err(Error::grid_mismatch(
            "strategy must live on the solve window and spatial grid",
        ));
    }
    if let Some(src) = diagonal_source {
        if src.time != *window || src.space != *space {
            return Err(Error::grid_mismatch("diagonal source on a different grid"));
        }
    }
    let marcher = Marcher::new(spec, window, space, cfg)?;
    let mut theta = ThetaField::zeros(window.clone(), space.clone());
    let m = window.num_points() - 1;
    fill_terminal_rows(spec, &mut theta, 0, m + 1);
    let mut stats = Vec::with_capacity(m);
    for j in (0..m).rev() {
        let diag_layer = diagonal_source.map(|src| src.layer(j + 1));
        let stat = advance_triangle_layer(
            &marcher,
            &mut theta,
            window,
            j,
            0,
            j,
            RecursionSlot::Diagonal,
            diag_layer,
            strategy.layer(j + 1),
        )?;
        stats.push(stat);
    }
    Ok((theta, stats))
}

/// Solve the frozen single-parameter equation on a window:
/// `Θ̃_s + ℍ(τ, s, x, Ψ(s,x), Θ(s,s,x), Θ̃_x, Θ̃_xx) = 0`, `Θ̃(T,·) = h(τ,·)`,
/// with the diagonal values supplied by `diagonal_source`.
pub fn solve_frozen_pde<T: Scalar>(
    spec: &ProblemSpec<T>,
    strategy: &FeedbackStrategy<T>,
    window: &Partition<T>,
    space: &SpatialGrid<T>,
    outer_time: T,
    diagonal_source: &ScalarField<T>,
    cfg: &PdeConfig<T>,
) -> Result<ScalarField<T>> {
    if strategy.time != *window
        || strategy.space != *space
        || diagonal_source.time != *window
        || diagonal_source.space != *space
    {
        return Err(Error::grid_mismatch(
            "frozen solve needs strategy and diagonal source on the window grids",
        ));
    }
    let marcher = Marcher::new(spec, window, space, cfg)?;
    let mut field = ScalarField::zeros(window.clone(), space.clone());
    let m = window.num_points() - 1;
    for k in 0..space.len() {
        let x = [space.node(k)];
        field.set(m, k, (spec.cost.free_term)(outer_time, &x));
    }
    let mut ws = HamiltonianWorkspace::new(spec.dynamics.state_dim, spec.dynamics.noise_dim);
    for j in (0..m).rev() {
        let s_next = window.point(j + 1);
        let dt = s_next - window.point(j);
        let row_next = field.layer(j + 1).to_vec();
        let mut out = vec![T::zero(); space.len()];
        marcher.advance_row(
            &mut ws,
            outer_time,
            s_next,
            dt,
            &row_next,
            diagonal_source.layer(j + 1),
            strategy.layer(j + 1),
            &mut out,
        )?;
        layer_stat(j, &row_next, &out)?;
        field.layer_mut(j).copy_from_slice(&out);
    }
    Ok(field)
}

/// Solve the classical HJB on a window with a fixed outer time:
/// `V_s + min_u ℍ(τ, s, x, u, V, V_x, V_xx) = 0` backward from `terminal`,
/// returning the value field and the argmin feedback.
pub fn solve_classical_hjb<T: Scalar>(
    spec: &ProblemSpec<T>,
    window: &Partition<T>,
    space: &SpatialGrid<T>,
    terminal: &[T],
    outer_time: T,
    cfg: &PdeConfig<T>,
) -> Result<(ScalarField<T>, FeedbackStrategy<T>, Vec<LayerStat<T>>)> {
    if terminal.len() != space.len() {
        return Err(Error::grid_mismatch("terminal slice does not match the grid"));
    }
    let marcher = Marcher::new(spec, window, space, cfg)?;
    let m_dim = spec.controls.control_dim();
    let mut value = ScalarField::zeros(window.clone(), space.clone());
    let mut feedback = FeedbackStrategy::zeros(window.clone(), space.clone(), m_dim, 0);
    let last = window.num_points() - 1;
    value.layer_mut(last).copy_from_slice(terminal);

    let mut ws = HamiltonianWorkspace::new(spec.dynamics.state_dim, spec.dynamics.noise_dim);
    let mut stats = Vec::with_capacity(last);
    for j in (0..last).rev() {
        let s_next = window.point(j + 1);
        let dt = s_next - window.point(j);
        let row_next = value.layer(j + 1).to_vec();
        let (d1, d2) = derivative_arrays(&row_next, space.dx())?;
        // argmin at the lagged value/derivatives defines the feedback layer
        let mut controls = vec![T::zero(); space.len() * m_dim];
        for k in 0..space.len() {
            let x = [space.node(k)];
            let min = spec.minimize_hamiltonian_with(
                &mut ws,
                outer_time,
                s_next,
                &x,
                row_next[k],
                &[d1[k]],
                &[d2[k]],
            )?;
            controls[k * m_dim..(k + 1) * m_dim].copy_from_slice(&min.control);
        }
        feedback.layer_mut(j + 1).copy_from_slice(&controls);
        let mut out = vec![T::zero(); space.len()];
        marcher.advance_row(
            &mut ws, outer_time, s_next, dt, &row_next, &row_next, &controls, &mut out,
        )?;
        stats.push(layer_stat(j, &row_next, &out)?);
        value.layer_mut(j).copy_from_slice(&out);
    }
    // feedback at the window start from the final layer's arguments
    let row0 = value.layer(0).to_vec();
    let (d1, d2) = derivative_arrays(&row0, space.dx())?;
    let mut controls = vec![T::zero(); space.len() * m_dim];
    minimize_at_outer(spec, space, outer_time, window.point(0), &row0, &d1, &d2, &mut controls)?;
    feedback.layer_mut(0).copy_from_slice(&controls);
    Ok((value, feedback, stats))
}

#[allow(clippy::too_many_arguments)]
fn minimize_at_outer<T: Scalar>(
    spec: &ProblemSpec<T>,
    space: &SpatialGrid<T>,
    outer_time: T,
    s: T,
    values: &[T],
    d1: &[T],
    d2: &[T],
    out: &mut [T],
) -> Result<()> {
    let m = spec.controls.control_dim();
    let mut ws = HamiltonianWorkspace::new(spec.dynamics.state_dim, spec.dynamics.noise_dim);
    for k in 0..space.len() {
        let x = [space.node(k)];
        let min = spec.minimize_hamiltonian_with(
            &mut ws,
            outer_time,
            s,
            &x,
            values[k],
            &[d1[k]],
            &[d2[k]],
        )?;
        out[k * m..(k + 1) * m].copy_from_slice(&min.control);
    }
    Ok(())
}

/// Solve the equilibrium HJB on the triangle over `grid`:
///
/// at each layer the pointwise minimizer is evaluated at diagonal arguments
/// `(Θ(s,s,x), Θ_x(s,s,x), Θ_xx(s,s,x))`, the resulting control field is the
/// equilibrium strategy, every row is advanced with that frozen control, and
/// the value function is the diagonal trace.
pub fn solve_equilibrium_hjb<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    cfg: &PdeConfig<T>,
) -> Result<EquilibriumSolution<T>> {
    solve_equilibrium_impl(spec, grid, space, cfg, RecursionSlot::Diagonal)
}

/// Comparison variant: identical march except the generator's recursion slot
/// receives the row value `Θ(t,s,x)` instead of the diagonal `Θ(s,s,x)`.
pub fn solve_equilibrium_hjb_variant<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    cfg: &PdeConfig<T>,
) -> Result<EquilibriumSolution<T>> {
    if !spec.dynamics.sigma_control_free {
        return Err(Error::unsupported(
            "the comparison variant requires a control-free diffusion",
        ));
    }
    solve_equilibrium_impl(spec, grid, space, cfg, RecursionSlot::RowValue)
}

fn solve_equilibrium_impl<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    cfg: &PdeConfig<T>,
    slot: RecursionSlot,
) -> Result<EquilibriumSolution<T>> {
    let marcher = Marcher::new(spec, grid, space, cfg)?;
    let m = grid.num_points() - 1;
    let m_dim = spec.controls.control_dim();
    let mut theta = ThetaField::zeros(grid.clone(), space.clone());
    let mut strategy = FeedbackStrategy::zeros(grid.clone(), space.clone(), m_dim, 0);
    fill_terminal_rows(spec, &mut theta, 0, m + 1);

    let mut stats = Vec::with_capacity(m);
    for j in (0..m).rev() {
        let diag = theta.row_layer(j + 1, j + 1).to_vec();
        let (d1, d2) = derivative_arrays(&diag, space.dx())?;
        let mut controls = vec![T::zero(); space.len() * m_dim];
        minimize_layer(spec, space, grid.point(j + 1), &diag, &d1, &d2, &mut controls)?;
        strategy.layer_mut(j + 1).copy_from_slice(&controls);
        let stat =
            advance_triangle_layer(&marcher, &mut theta, grid, j, 0, j, slot, None, &controls)?;
        stats.push(stat);
    }
    // strategy at the initial layer from the converged diagonal
    let diag = theta.row_layer(0, 0).to_vec();
    let (d1, d2) = derivative_arrays(&diag, space.dx())?;
    let mut controls = vec![T::zero(); space.len() * m_dim];
    minimize_layer(spec, space, grid.point(0), &diag, &d1, &d2, &mut controls)?;
    strategy.layer_mut(0).copy_from_slice(&controls);

    let value = theta.diagonal_trace();
    let regime = if spec.dynamics.sigma_control_free {
        RegimeFlag::ControlFreeDiffusion
    } else {
        RegimeFlag::ControlDependentDiffusion
    };
    Ok(EquilibriumSolution {
        theta,
        value,
        strategy,
        regime,
        wyy_variant: matches!(slot, RecursionSlot::RowValue),
        stats,
    })
}
