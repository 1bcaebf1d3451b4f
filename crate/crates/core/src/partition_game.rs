//! The multi-player construction: a feedback strategy is extended one
//! subinterval at a time by solving, per stage, a representation equation on
//! the already-covered triangle, a frozen single-parameter equation, and a
//! classical HJB on the new cell. Folding the stages over a partition yields
//! the approximate equilibrium; refining the partition approaches the
//! equilibrium-HJB solution.

use crate::error::{Error, Result};
use crate::grids::{Partition, ScalarField, SpatialGrid, ThetaField};
use crate::model::{HamiltonianWorkspace, ProblemSpec, SamplingCheckConfig};
use crate::pde::{
    advance_triangle_layer, fill_terminal_rows, solve_classical_hjb, solve_equilibrium_hjb,
    FeedbackStrategy, Marcher, PdeConfig, RecursionSlot,
};
use crate::scalar::Scalar;

/// A triangular field populated row by row from the horizon leftward. Rows
/// `valid_from..` hold solved values; rows below are not yet defined.
pub struct GrowingTriangle<T> {
    pub field: ThetaField<T>,
    pub valid_from: usize,
}

impl<T: Scalar> GrowingTriangle<T> {
    pub fn empty(grid: Partition<T>, space: SpatialGrid<T>) -> Self {
        let valid_from = grid.num_points();
        GrowingTriangle {
            field: ThetaField::zeros(grid, space),
            valid_from,
        }
    }
}

/// Fields produced by one extension stage.
pub struct StageFields<T> {
    /// 1-based stage index counted from the left cell of the partition.
    pub stage: usize,
    /// Frozen-parameter field on the window right of the cell; the horizon
    /// stage has no window and stores nothing.
    pub frozen: Option<ScalarField<T>>,
    /// HJB value field on the cell.
    pub hjb_value: ScalarField<T>,
}

/// The approximate equilibrium associated with one partition.
pub struct ApproximateEquilibrium<T> {
    pub partition: Partition<T>,
    pub grid: Partition<T>,
    pub strategy: FeedbackStrategy<T>,
    pub theta: ThetaField<T>,
    pub stages: Vec<StageFields<T>>,
}

/// Indices of the game partition's points inside the fine marching grid.
pub fn partition_grid_indices<T: Scalar>(
    partition: &Partition<T>,
    grid: &Partition<T>,
) -> Result<Vec<usize>> {
    if partition.start() != grid.start() || partition.end() != grid.end() {
        return Err(Error::grid_mismatch(
            "partition and marching grid must span the same interval",
        ));
    }
    partition.points().iter().map(|&p| grid.index_of(p)).collect()
}

/// Extend a strategy one cell `[t_{k−1}, t_k]` to the left.
///
/// On entry `strategy` is valid from grid layer `cell_right` on (empty for
/// the horizon stage) and `theta` holds rows `cell_right..` at most. Steps:
/// extend the representation triangle down to row `cell_right`, solve the
/// frozen equation with outer time `t_{k−1}`, solve the HJB on the cell with
/// the frozen field's left slice as terminal, and splice the argmin feedback
/// onto the strategy on `[t_{k−1}, t_k)`.
#[allow(clippy::too_many_arguments)]
pub fn extend_strategy<T: Scalar>(
    spec: &ProblemSpec<T>,
    strategy: &mut FeedbackStrategy<T>,
    theta: &mut GrowingTriangle<T>,
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    cell_left: usize,
    cell_right: usize,
    cfg: &PdeConfig<T>,
) -> Result<StageFields<T>> {
    let last = grid.num_points() - 1;
    if cell_left >= cell_right || cell_right > last {
        return Err(Error::domain("invalid cell indices for strategy extension"));
    }
    let outer_time = grid.point(cell_left);

    // Step 1: representation triangle down to row `cell_right`, then the
    // frozen single-parameter field on [t_k, T].
    extend_theta_rows(spec, strategy, theta, grid, space, cell_right, cfg)?;
    let frozen = if cell_right == last {
        None
    } else {
        Some(solve_frozen_window(
            spec, strategy, theta, grid, space, cell_right, outer_time, cfg,
        )?)
    };

    // Step 2: classical HJB on the cell; terminal is the frozen field's left
    // slice, or the free term itself at the horizon stage.
    let window = grid.window(cell_left, cell_right)?;
    let terminal: Vec<T> = match &frozen {
        Some(f) => f.layer(0).to_vec(),
        None => (0..space.len())
            .map(|k| (spec.cost.free_term)(outer_time, &[space.node(k)]))
            .collect(),
    };
    let (hjb_value, feedback, _) =
        solve_classical_hjb(spec, &window, space, &terminal, outer_time, cfg)?;

    // Step 3: splice. The cell's right endpoint stays owned by the later
    // stage, except at the horizon where no later stage exists.
    let splice_end = if cell_right == last { cell_right + 1 } else { cell_right };
    for j in cell_left..splice_end {
        let layer = feedback.layer(j - cell_left).to_vec();
        strategy.layer_mut(j).copy_from_slice(&layer);
    }
    strategy.valid_from = cell_left;

    Ok(StageFields {
        stage: 0,
        frozen,
        hjb_value,
    })
}

/// March new rows of the shared triangle down to `first_row`. Rows already
/// present are reused untouched; the overlap is never re-solved.
fn extend_theta_rows<T: Scalar>(
    spec: &ProblemSpec<T>,
    strategy: &FeedbackStrategy<T>,
    theta: &mut GrowingTriangle<T>,
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    first_row: usize,
    cfg: &PdeConfig<T>,
) -> Result<()> {
    let last = grid.num_points() - 1;
    if first_row >= theta.valid_from {
        return Ok(());
    }
    let marcher = Marcher::new(spec, grid, space, cfg)?;
    fill_terminal_rows(spec, &mut theta.field, first_row, theta.valid_from.min(last + 1));
    for j in (first_row..last).rev() {
        let new_top = theta.valid_from.saturating_sub(1).min(j);
        advance_triangle_layer(
            &marcher,
            &mut theta.field,
            grid,
            j,
            first_row,
            new_top,
            RecursionSlot::Diagonal,
            None,
            strategy.layer(j + 1),
        )?;
    }
    theta.valid_from = first_row;
    Ok(())
}

/// Frozen-parameter march on `[grid[first_row], T]` with the triangle's
/// diagonal feeding the recursion slot.
#[allow(clippy::too_many_arguments)]
fn solve_frozen_window<T: Scalar>(
    spec: &ProblemSpec<T>,
    strategy: &FeedbackStrategy<T>,
    theta: &GrowingTriangle<T>,
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    first_row: usize,
    outer_time: T,
    cfg: &PdeConfig<T>,
) -> Result<ScalarField<T>> {
    let last = grid.num_points() - 1;
    let window = grid.window(first_row, last)?;
    let marcher = Marcher::new(spec, &window, space, cfg)?;
    let steps = window.num_points() - 1;
    let mut field = ScalarField::zeros(window, space.clone());
    for k in 0..space.len() {
        let x = [space.node(k)];
        field.set(steps, k, (spec.cost.free_term)(outer_time, &x));
    }
    let mut ws = HamiltonianWorkspace::new(spec.dynamics.state_dim, spec.dynamics.noise_dim);
    for j in (0..steps).rev() {
        let g_next = first_row + j + 1; // global grid layer of the source
        let s_next = grid.point(g_next);
        let dt = s_next - grid.point(g_next - 1);
        let row_next = field.layer(j + 1).to_vec();
        let diag = theta.field.row_layer(g_next, g_next).to_vec();
        let mut out = vec![T::zero(); space.len()];
        marcher.advance_row(
            &mut ws,
            outer_time,
            s_next,
            dt,
            &row_next,
            &diag,
            strategy.layer(g_next),
            &mut out,
        )?;
        field.layer_mut(j).copy_from_slice(&out);
    }
    Ok(field)
}

/// Fold the strategy extension backward over all cells of a partition.
pub fn build_approximate_equilibrium<T: Scalar>(
    spec: &ProblemSpec<T>,
    partition: &Partition<T>,
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    cfg: &PdeConfig<T>,
) -> Result<ApproximateEquilibrium<T>> {
    spec.run_sampling_checks(&SamplingCheckConfig {
        samples: 200,
        state_range: (space.lo(), space.hi()),
        ..SamplingCheckConfig::default()
    })?;
    let idx = partition_grid_indices(partition, grid)?;
    let n_cells = idx.len() - 1;
    let m_dim = spec.controls.control_dim();
    let mut strategy =
        FeedbackStrategy::zeros(grid.clone(), space.clone(), m_dim, grid.num_points());
    let mut theta = GrowingTriangle::empty(grid.clone(), space.clone());

    let mut stages = Vec::with_capacity(n_cells);
    for stage in (0..n_cells).rev() {
        let mut fields = extend_strategy(
            spec,
            &mut strategy,
            &mut theta,
            grid,
            space,
            idx[stage],
            idx[stage + 1],
            cfg,
        )?;
        fields.stage = stage + 1;
        stages.push(fields);
    }
    // rows with outer time inside the first cell, under the complete strategy
    extend_theta_rows(spec, &strategy, &mut theta, grid, space, 0, cfg)?;

    for j in 0..grid.num_points() {
        for k in 0..space.len() {
            if !spec.controls.contains(strategy.get(j, k), T::c(1e-9)) {
                return Err(Error::domain(
                    "constructed strategy left the admissible control set",
                ));
            }
        }
    }
    Ok(ApproximateEquilibrium {
        partition: partition.clone(),
        grid: grid.clone(),
        strategy,
        theta: theta.field,
        stages,
    })
}

/// One row of the refinement table.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow<T> {
    pub n_cells: usize,
    pub mesh: T,
    /// Sup-norm gap to the finest partition's field.
    pub gap_self: T,
    /// Sup-norm gap to the equilibrium-HJB field on the same grid.
    pub gap_limit: T,
}

pub struct ConvergenceStudy<T> {
    pub rows: Vec<ConvergenceRow<T>>,
    /// Log-log rate fitted on `gap_limit` over the last three rows.
    pub fitted_rate: Option<T>,
}

/// Mesh-refinement study: approximate equilibria for each cell count against
/// the finest one and against the equilibrium-HJB limit on a shared grid.
pub fn convergence_study<T: Scalar>(
    spec: &ProblemSpec<T>,
    n_list: &[usize],
    grid: &Partition<T>,
    space: &SpatialGrid<T>,
    cfg: &PdeConfig<T>,
) -> Result<ConvergenceStudy<T>> {
    if n_list.is_empty() {
        return Err(Error::config("empty refinement list"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("refinement list must be strictly ascending"));
    }
    let steps = grid.num_points() - 1;
    for &n in n_list {
        if steps % n != 0 {
            return Err(Error::config(format!(
                "cell count {n} does not divide the marching grid ({steps} steps)"
            )));
        }
    }
    let limit = solve_equilibrium_hjb(spec, grid, space, cfg)?;
    let mut fields = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let partition = uniform_sub_partition(grid, n)?;
        let approx = build_approximate_equilibrium(spec, &partition, grid, space, cfg)?;
        fields.push((n, partition.mesh(), approx.theta));
    }
    let finest = fields.last().unwrap().2.clone();
    let mut rows = Vec::with_capacity(fields.len());
    for (n, mesh, theta) in &fields {
        rows.push(ConvergenceRow {
            n_cells: *n,
            mesh: *mesh,
            gap_self: theta.max_abs_diff(&finest)?,
            gap_limit: theta.max_abs_diff(&limit.theta)?,
        });
    }
    let fitted_rate = fit_rate(&rows);
    Ok(ConvergenceStudy { rows, fitted_rate })
}

/// The sub-partition of `grid` with `n` equal cells (in index count).
pub fn uniform_sub_partition<T: Scalar>(grid: &Partition<T>, n: usize) -> Result<Partition<T>> {
    let steps = grid.num_points() - 1;
    if n == 0 || steps % n != 0 {
        return Err(Error::config(format!(
            "cannot split {steps} grid steps into {n} cells"
        )));
    }
    let stride = steps / n;
    let points: Vec<T> = (0..=n).map(|i| grid.point(i * stride)).collect();
    Partition::new(points)
}

fn fit_rate<T: Scalar>(rows: &[ConvergenceRow<T>]) -> Option<T> {
    let usable: Vec<&ConvergenceRow<T>> = rows
        .iter()
        .filter(|r| r.gap_limit > T::zero() && r.mesh > T::zero())
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let tail = &usable[usable.len().saturating_sub(3)..];
    let n = T::of_usize(tail.len());
    let mut mx = T::zero();
    let mut my = T::zero();
    for r in tail {
        mx += r.mesh.ln();
        my += r.gap_limit.ln();
    }
    mx /= n;
    my /= n;
    let mut num = T::zero();
    let mut den = T::zero();
    for r in tail {
        let dx = r.mesh.ln() - mx;
        num += dx * (r.gap_limit.ln() - my);
        den += dx * dx;
    }
    if den > T::zero() {
        Some(num / den)
    } else {
        None
    }
}
