//! Comparative Monte Carlo studies: the frozen-window gap in ε, recursive
//! cost evaluation, residuals of the field representation along paths, and
//! the local near-optimality probe. All comparisons share one noise stream.

use crate::error::{Error, Result};
use crate::grids::ThetaField;
use crate::model::ProblemSpec;
use crate::pde::FeedbackStrategy;
use crate::scalar::Scalar;

use super::bsvie::{solve_bsvie, solve_modified_bsvie, BsvieOptions};
use super::paths::{simulate_sde, ControlLaw, InitialState, SamplePaths};

/// Result of one recursive cost evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CostEstimate<T> {
    pub value: T,
    pub std_error: T,
}

/// Recursive cost `J(t, ξ; policy)` as the start value of the backward
/// Volterra solve along simulated paths, with its Monte Carlo standard error.
pub fn evaluate_cost<T: Scalar>(
    spec: &ProblemSpec<T>,
    law: &ControlLaw<'_, T>,
    initial: &InitialState<'_, T>,
    grid: &crate::grids::Partition<T>,
    n_paths: usize,
    seed: u64,
    opts: &BsvieOptions,
) -> Result<CostEstimate<T>> {
    let paths = simulate_sde(spec, law, initial, grid, n_paths, seed)?;
    let pair = solve_bsvie(&paths, &*spec.cost.generator, &*spec.cost.free_term, 0, opts)?;
    Ok(CostEstimate {
        value: pair.value_mean,
        std_error: pair.value_se,
    })
}

/// Output of the frozen-window gap study.
#[derive(Debug, Clone)]
pub struct EpsilonStudy<T> {
    /// `(ε, |Y_ε(t) − Y(t)|)` rows, in the order requested.
    pub gaps: Vec<(T, T)>,
    /// Log-log slope over the rows; `None` when the study is vacuous.
    pub fitted_slope: Option<T>,
    /// All gaps sat below the regression noise floor.
    pub vacuous: bool,
    pub noise_floor: T,
}

/// Gap between the frozen-window modification and the unmodified solve at
/// the window start, for each ε, under common random numbers.
///
/// `eps_layers` are grid offsets from `start`; each must be a grid point.
pub fn epsilon_gap_study<T: Scalar>(
    spec: &ProblemSpec<T>,
    paths: &SamplePaths<T>,
    start: usize,
    eps_layers: &[usize],
    opts: &BsvieOptions,
    fast: bool,
) -> Result<EpsilonStudy<T>> {
    if eps_layers.is_empty() {
        return Err(Error::config("empty epsilon list"));
    }
    let last = paths.num_steps();
    if eps_layers.iter().any(|&e| start + e > last || e == 0) {
        return Err(Error::domain("epsilon outside (0, T − t]"));
    }
    let base = solve_bsvie(paths, &*spec.cost.generator, &*spec.cost.free_term, start, opts)?;
    let mut gaps = Vec::with_capacity(eps_layers.len());
    for &e in eps_layers {
        let modified = solve_modified_bsvie(
            paths,
            &*spec.cost.generator,
            &*spec.cost.free_term,
            &base,
            start,
            start + e,
            opts,
            fast,
        )?;
        let eps = paths.grid.point(start + e) - paths.grid.point(start);
        // common random numbers: difference of per-path accumulators
        let n = T::of_usize(paths.n_paths);
        let diff = modified
            .start_accumulators
            .iter()
            .zip(&base.start_accumulators)
            .fold(T::zero(), |a, (m, b)| a + (*m - *b))
            / n;
        gaps.push((eps, diff.abs()));
    }
    let noise_floor = T::c(5.0) / T::of_usize(paths.n_paths).sqrt() * T::c(1e-2);
    let vacuous = gaps.iter().all(|(_, g)| *g <= noise_floor);
    let fitted_slope = if vacuous {
        None
    } else {
        Some(loglog_slope(&gaps))
    };
    Ok(EpsilonStudy {
        gaps,
        fitted_slope,
        vacuous,
        noise_floor,
    })
}

fn loglog_slope<T: Scalar>(points: &[(T, T)]) -> T {
    let n = T::of_usize(points.len());
    let mut mx = T::zero();
    let mut my = T::zero();
    for (x, y) in points {
        mx += x.ln();
        my += y.max(T::c(1e-300)).ln();
    }
    mx /= n;
    my /= n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (x, y) in points {
        let dx = x.ln() - mx;
        num += dx * (y.max(T::c(1e-300)).ln() - my);
        den += dx * dx;
    }
    num / den
}

/// Residuals of the field representation along closed-loop paths.
#[derive(Debug, Clone, Copy)]
pub struct FkResiduals<T> {
    /// RMS over paths and times of `|Y(s) − Θ(s, s, X_s)|`.
    pub y_rms: T,
    /// RMS over sampled triangle nodes of `|Z(s,r) − Θ_x(s,r,X_r)·σ(r,X_r,u)|`.
    pub z_rms: T,
}

/// Simulate the closed-loop system, solve the backward Volterra equation
/// along the paths, and measure how far the solution sits from the field's
/// diagonal and gradient representation.
#[allow(clippy::too_many_arguments)]
pub fn check_feynman_kac<T: Scalar>(
    spec: &ProblemSpec<T>,
    theta: &ThetaField<T>,
    strategy: &FeedbackStrategy<T>,
    initial: &InitialState<'_, T>,
    n_paths: usize,
    seed: u64,
    opts: &BsvieOptions,
    outer_stride: usize,
) -> Result<FkResiduals<T>> {
    let grid = theta.time.clone();
    let paths = simulate_sde(
        spec,
        &ControlLaw::Feedback(strategy),
        initial,
        &grid,
        n_paths,
        seed,
    )?;
    let mut z_opts = *opts;
    z_opts.retain_z = true;
    let pair = solve_bsvie(&paths, &*spec.cost.generator, &*spec.cost.free_term, 0, &z_opts)?;

    let last = paths.num_steps();
    let mut y_sq = T::zero();
    let mut y_count = 0usize;
    for j in 0..=last {
        for p in 0..n_paths {
            let x = paths.state(p, j);
            let d = pair.y_value(p, j) - theta.interp(j, j, x);
            y_sq += d * d;
            y_count += 1;
        }
    }
    let y_rms = (y_sq / T::of_usize(y_count)).sqrt();

    let mut z_sq = T::zero();
    let mut z_count = 0usize;
    let mut sigma = [T::zero()];
    let path_stride = (n_paths / 2048).max(1);
    for j in (0..last).step_by(outer_stride.max(1)) {
        for r in j..last {
            for p in (0..n_paths).step_by(path_stride) {
                let x = paths.state(p, r);
                let u = paths.control(p, r);
                (spec.dynamics.diffusion)(paths.grid.point(r), &[x], u, &mut sigma);
                let want = theta.interp_dx(j, r, x) * sigma[0];
                let got = pair.z_value(&paths, p, j, r);
                let d = got - want;
                z_sq += d * d;
                z_count += 1;
            }
        }
    }
    let z_rms = if z_count > 0 {
        (z_sq / T::of_usize(z_count)).sqrt()
    } else {
        T::zero()
    };
    Ok(FkResiduals { y_rms, z_rms })
}

/// One perturbation of the probe: either a constant control on the window or
/// the strategy itself (the null perturbation).
#[derive(Debug, Clone)]
pub enum Perturbation<T> {
    Constant(Vec<T>),
    Unperturbed,
}

#[derive(Debug, Clone)]
pub struct ProbeRow<T> {
    pub eps: T,
    pub label: String,
    pub diff: T,
    pub std_error: T,
}

#[derive(Debug, Clone)]
pub struct ProbeStudy<T> {
    pub rows: Vec<ProbeRow<T>>,
    /// Worst violation `(J(Ψ) − min_u J(u⊕Ψ))⁺` per ε.
    pub violations: Vec<(T, T)>,
    /// Fitted log-log exponent of the violations above the noise floor;
    /// `None` when every violation is noise-level (vacuously near-optimal).
    pub fitted_exponent: Option<T>,
    pub noise_floor: T,
}

/// Cost differences `J(t, ξ; u ⊕ Ψ) − J(t, ξ; Ψ)` for constant perturbations
/// on shrinking windows, under common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn local_optimality_probe<T: Scalar>(
    spec: &ProblemSpec<T>,
    strategy: &FeedbackStrategy<T>,
    initial: &InitialState<'_, T>,
    grid: &crate::grids::Partition<T>,
    eps_layers: &[usize],
    perturbations: &[Perturbation<T>],
    n_paths: usize,
    seed: u64,
    opts: &BsvieOptions,
) -> Result<ProbeStudy<T>> {
    if eps_layers.is_empty() || perturbations.is_empty() {
        return Err(Error::config("probe needs epsilons and perturbations"));
    }
    let base_paths = simulate_sde(
        spec,
        &ControlLaw::Feedback(strategy),
        initial,
        grid,
        n_paths,
        seed,
    )?;
    let base = solve_bsvie(
        &base_paths,
        &*spec.cost.generator,
        &*spec.cost.free_term,
        0,
        opts,
    )?;

    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut max_se = T::zero();
    for &e in eps_layers {
        let eps = grid.point(e) - grid.point(0);
        let mut worst = T::zero();
        for (pi, pert) in perturbations.iter().enumerate() {
            let (diff, se, label) = match pert {
                Perturbation::Unperturbed => (T::zero(), T::zero(), "strategy".to_string()),
                Perturbation::Constant(u) => {
                    let law = ControlLaw::Spliced {
                        head: u,
                        switch_layer: e,
                        tail: strategy,
                    };
                    let pert_paths = simulate_sde(spec, &law, initial, grid, n_paths, seed)?;
                    let pair = solve_bsvie(
                        &pert_paths,
                        &*spec.cost.generator,
                        &*spec.cost.free_term,
                        0,
                        opts,
                    )?;
                    let n = T::of_usize(n_paths);
                    let mut mean = T::zero();
                    for (a, b) in pair
                        .start_accumulators
                        .iter()
                        .zip(&base.start_accumulators)
                    {
                        mean += *a - *b;
                    }
                    mean /= n;
                    let mut var = T::zero();
                    for (a, b) in pair
                        .start_accumulators
                        .iter()
                        .zip(&base.start_accumulators)
                    {
                        let d = *a - *b - mean;
                        var += d * d;
                    }
                    var /= n;
                    let label = format!("u{pi}");
                    (mean, (var / n).sqrt(), label)
                }
            };
            max_se = max_se.max(se);
            worst = worst.max(-diff);
            rows.push(ProbeRow {
                eps,
                label,
                diff,
                std_error: se,
            });
        }
        violations.push((eps, worst.max(T::zero())));
    }

    let noise_floor = T::c(3.0) * max_se;
    let informative: Vec<(T, T)> = violations
        .iter()
        .filter(|(_, v)| *v > noise_floor)
        .copied()
        .collect();
    let fitted_exponent = if informative.len() >= 2 {
        Some(loglog_slope(&informative))
    } else {
        None
    };
    Ok(ProbeStudy {
        rows,
        violations,
        fitted_exponent,
        noise_floor,
    })
}

