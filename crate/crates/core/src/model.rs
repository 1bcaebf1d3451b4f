//! Control problem data: dynamics, recursive cost, control set, and the
//! pointwise Hamiltonian with its minimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::DiscountKernel;
use crate::scalar::Scalar;

/// Drift `b(r, x, u)`; writes the state-dimensional result into `out`.
pub type DriftFn<T> = dyn Fn(T, &[T], &[T], &mut [T]) + Send + Sync;
/// Diffusion `σ(r, x, u)`; writes the `n×d` row-major matrix into `out`.
pub type DiffusionFn<T> = dyn Fn(T, &[T], &[T], &mut [T]) + Send + Sync;
/// Generator `g(t, r, x, u, y, z)` with a `1×d` row `z`.
pub type GeneratorFn<T> = dyn Fn(T, T, &[T], &[T], T, &[T]) -> T + Send + Sync;
/// Free term `h(t, x)`.
pub type FreeTermFn<T> = dyn Fn(T, &[T]) -> T + Send + Sync;
/// Closed-form Hamiltonian minimizer `ψ(t, s, x, θ, p, P)`; writes the control.
pub type MinimizerFn<T> = dyn Fn(T, T, &[T], T, &[T], &[T], &mut [T]) + Send + Sync;

/// Controlled forward dynamics.
pub struct ControlledDynamics<T> {
    pub drift: Box<DriftFn<T>>,
    pub diffusion: Box<DiffusionFn<T>>,
    pub state_dim: usize,
    pub noise_dim: usize,
    /// Set when σ(t, x, ·) is constant in the control; solvers use it to
    /// label whether a run sits inside the well-posedness regime.
    pub sigma_control_free: bool,
}

/// Recursive cost data: generator and free term of the backward equation.
pub struct CostSpec<T> {
    pub generator: Box<GeneratorFn<T>>,
    pub free_term: Box<FreeTermFn<T>>,
    /// Set when `g` and `h` do not depend on their outer-time argument; in
    /// that case the problem degenerates to a time-consistent one.
    pub time_homogeneous_in_t: bool,
}

/// Admissible control values: a finite list or a box scanned at a resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet<T> {
    Finite(Vec<Vec<T>>),
    Box {
        lo: Vec<T>,
        hi: Vec<T>,
        resolution: T,
    },
}

impl<T: Scalar> ControlSet<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            ControlSet::Finite(points) => {
                if points.is_empty() {
                    return Err(Error::domain("finite control set is empty"));
                }
                let m = points[0].len();
                if m == 0 || points.iter().any(|p| p.len() != m) {
                    return Err(Error::domain("control points have inconsistent dimension"));
                }
            }
            ControlSet::Box { lo, hi, resolution } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::domain("control box bounds have mismatched dimension"));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::domain("control box needs lo <= hi componentwise"));
                }
                if !(*resolution > T::zero()) {
                    return Err(Error::domain("control box scan resolution must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn control_dim(&self) -> usize {
        match self {
            ControlSet::Finite(points) => points[0].len(),
            ControlSet::Box { lo, .. } => lo.len(),
        }
    }

    /// Clamp a candidate control into the set (box projection; nearest point
    /// is not searched for finite sets, which are used as-is).
    pub fn clamp(&self, u: &mut [T]) {
        if let ControlSet::Box { lo, hi, .. } = self {
            for ((v, l), h) in u.iter_mut().zip(lo).zip(hi) {
                if *v < *l {
                    *v = *l;
                }
                if *v > *h {
                    *v = *h;
                }
            }
        }
    }

    pub fn contains(&self, u: &[T], tol: T) -> bool {
        match self {
            ControlSet::Finite(points) => points.iter().any(|p| {
                p.iter()
                    .zip(u)
                    .all(|(a, b)| (*a - *b).abs() <= tol)
            }),
            ControlSet::Box { lo, hi, .. } => u
                .iter()
                .zip(lo)
                .zip(hi)
                .all(|((v, l), h)| *v >= *l - tol && *v <= *h + tol),
        }
    }

    /// Visit all scan candidates in lexicographic order.
    fn for_each_candidate(&self, mut visit: impl FnMut(&[T])) {
        match self {
            ControlSet::Finite(points) => {
                for p in points {
                    visit(p);
                }
            }
            ControlSet::Box { lo, hi, resolution } => {
                let m = lo.len();
                let mut counts = vec![0usize; m];
                let mut steps = vec![T::zero(); m];
                for i in 0..m {
                    let span = hi[i] - lo[i];
                    if span <= T::zero() {
                        counts[i] = 1;
                        steps[i] = T::zero();
                    } else {
                        let n = (span / *resolution).ceil().to_usize().unwrap_or(1).max(1);
                        counts[i] = n + 1;
                        steps[i] = span / T::of_usize(n);
                    }
                }
                let mut idx = vec![0usize; m];
                let mut u = vec![T::zero(); m];
                loop {
                    for i in 0..m {
                        u[i] = if idx[i] + 1 == counts[i] {
                            hi[i]
                        } else {
                            lo[i] + steps[i] * T::of_usize(idx[i])
                        };
                    }
                    visit(&u);
                    let mut dim = m;
                    loop {
                        if dim == 0 {
                            return;
                        }
                        dim -= 1;
                        idx[dim] += 1;
                        if idx[dim] < counts[dim] {
                            break;
                        }
                        idx[dim] = 0;
                    }
                    // carry loop above resets exhausted digits; done when the
                    // most significant digit wrapped
                    if idx.iter().all(|&i| i == 0) {
                        return;
                    }
                }
            }
        }
    }

    /// A representative sample of controls used by the coefficient checks.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        match self {
            ControlSet::Finite(points) => {
                for i in 0..count {
                    out.push(points[i % points.len()].clone());
                }
            }
            ControlSet::Box { lo, hi, .. } => {
                for _ in 0..count {
                    let u: Vec<T> = lo
                        .iter()
                        .zip(hi)
                        .map(|(l, h)| *l + (*h - *l) * T::c(rng.random::<f64>()))
                        .collect();
                    out.push(u);
                }
            }
        }
        out
    }
}

/// The full problem description handed to every solver.
pub struct ProblemSpec<T> {
    pub dynamics: ControlledDynamics<T>,
    pub cost: CostSpec<T>,
    pub controls: ControlSet<T>,
    pub kernel: Option<DiscountKernel<T>>,
    pub horizon: T,
    /// Closed-form minimizer of the Hamiltonian, when one is known.
    pub minimizer: Option<Box<MinimizerFn<T>>>,
    /// Refine one-dimensional box scans with a golden-section pass.
    pub golden_refine: bool,
}

/// Reusable buffers for Hamiltonian evaluation; one per worker.
pub struct HamiltonianWorkspace<T> {
    drift: Vec<T>,
    sigma: Vec<T>,
    row_z: Vec<T>,
}

impl<T: Scalar> HamiltonianWorkspace<T> {
    pub fn new(state_dim: usize, noise_dim: usize) -> Self {
        HamiltonianWorkspace {
            drift: vec![T::zero(); state_dim],
            sigma: vec![T::zero(); state_dim * noise_dim],
            row_z: vec![T::zero(); noise_dim],
        }
    }

    pub(crate) fn sigma_buffer(&mut self) -> &mut [T] {
        &mut self.sigma
    }
}

/// Result of a pointwise Hamiltonian minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub control: Vec<T>,
    pub value: T,
    /// Set when a box scan attained its minimum on the box boundary, i.e. the
    /// unconstrained minimizer was truncated to the configured box.
    pub truncated: bool,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero()) {
            return Err(Error::domain("horizon must be positive"));
        }
        self.controls.validate()?;
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        if self.dynamics.state_dim == 0 || self.dynamics.noise_dim == 0 {
            return Err(Error::domain("state and noise dimensions must be positive"));
        }
        Ok(())
    }

    /// Evaluate the Hamiltonian
    /// `½ tr[P σσᵀ] + p·b + g(t, s, x, u, θ, pσ)` at one point.
    pub fn hamiltonian(
        &self,
        t: T,
        s: T,
        x: &[T],
        u: &[T],
        theta: T,
        p: &[T],
        pp: &[T],
    ) -> Result<T> {
        let mut ws = HamiltonianWorkspace::new(self.dynamics.state_dim, self.dynamics.noise_dim);
        self.hamiltonian_with(&mut ws, t, s, x, u, theta, p, pp)
    }

    /// Workspace-reusing variant of [`ProblemSpec::hamiltonian`].
    pub fn hamiltonian_with(
        &self,
        ws: &mut HamiltonianWorkspace<T>,
        t: T,
        s: T,
        x: &[T],
        u: &[T],
        theta: T,
        p: &[T],
        pp: &[T],
    ) -> Result<T> {
        let n = self.dynamics.state_dim;
        let d = self.dynamics.noise_dim;
        debug_assert!(t <= s, "hamiltonian needs (t, s) in the time triangle");
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(p.len(), n);
        debug_assert_eq!(pp.len(), n * n);

        (self.dynamics.drift)(s, x, u, &mut ws.drift);
        (self.dynamics.diffusion)(s, x, u, &mut ws.sigma);

        // ½ tr[P σσᵀ] = ½ Σ_{i,j,k} P[i][j] σ[j][k] σ[i][k]
        let mut trace = T::zero();
        for i in 0..n {
            for j in 0..n {
                let mut dot = T::zero();
                for k in 0..d {
                    dot += ws.sigma[j * d + k] * ws.sigma[i * d + k];
                }
                trace += pp[i * n + j] * dot;
            }
        }
        let mut drift_term = T::zero();
        for i in 0..n {
            drift_term += p[i] * ws.drift[i];
        }
        for k in 0..d {
            let mut v = T::zero();
            for i in 0..n {
                v += p[i] * ws.sigma[i * d + k];
            }
            ws.row_z[k] = v;
        }
        let g = (self.cost.generator)(t, s, x, u, theta, &ws.row_z);
        let value = T::half() * trace + drift_term + g;
        if !value.is_finite() {
            return Err(Error::eval(format!(
                "hamiltonian not finite at t = {t}, s = {s}, x = {:?}, u = {:?}",
                x, u
            )));
        }
        Ok(value)
    }

    /// Minimize `u ↦ ℍ(t, s, x, u, θ, p, P)`.
    ///
    /// Uses the closed-form minimizer when the problem carries one; otherwise
    /// scans the control set in lexicographic order (ties keep the smaller
    /// control) with an optional golden-section refinement for scalar boxes.
    pub fn minimize_hamiltonian(
        &self,
        t: T,
        s: T,
        x: &[T],
        theta: T,
        p: &[T],
        pp: &[T],
    ) -> Result<Minimum<T>> {
        let mut ws = HamiltonianWorkspace::new(self.dynamics.state_dim, self.dynamics.noise_dim);
        self.minimize_hamiltonian_with(&mut ws, t, s, x, theta, p, pp)
    }

    pub fn minimize_hamiltonian_with(
        &self,
        ws: &mut HamiltonianWorkspace<T>,
        t: T,
        s: T,
        x: &[T],
        theta: T,
        p: &[T],
        pp: &[T],
    ) -> Result<Minimum<T>> {
        if let Some(psi) = &self.minimizer {
            let mut u = vec![T::zero(); self.controls.control_dim()];
            psi(t, s, x, theta, p, pp, &mut u);
            let value = self.hamiltonian_with(ws, t, s, x, &u, theta, p, pp)?;
            return Ok(Minimum {
                control: u,
                value,
                truncated: false,
            });
        }

        let mut best: Option<(Vec<T>, T)> = None;
        let mut eval_error: Option<String> = None;
        self.controls.for_each_candidate(|u| {
            match self.hamiltonian_with(ws, t, s, x, u, theta, p, pp) {
                Ok(v) => {
                    let improves = match &best {
                        Some((_, b)) => v < *b,
                        None => true,
                    };
                    if improves {
                        best = Some((u.to_vec(), v));
                    }
                }
                Err(e) => {
                    if eval_error.is_none() {
                        eval_error = Some(e.to_string());
                    }
                }
            }
        });
        let (mut control, mut value) = best.ok_or_else(|| {
            Error::Minimization(format!(
                "no finite Hamiltonian value over the control scan ({})",
                eval_error.unwrap_or_else(|| "empty scan".into())
            ))
        })?;

        let mut truncated = false;
        if let ControlSet::Box { lo, hi, resolution } = &self.controls {
            if self.golden_refine && lo.len() == 1 {
                let (u_ref, v_ref) = self.golden_section(
                    ws,
                    t,
                    s,
                    x,
                    theta,
                    p,
                    pp,
                    (control[0] - *resolution).max(lo[0]),
                    (control[0] + *resolution).min(hi[0]),
                )?;
                if v_ref < value {
                    control[0] = u_ref;
                    value = v_ref;
                }
            }
            let edge = T::c(1e-12) * (T::one() + hi[0].abs().max(lo[0].abs()));
            truncated = control
                .iter()
                .zip(lo)
                .zip(hi)
                .any(|((v, l), h)| (*v - *l).abs() <= edge || (*v - *h).abs() <= edge);
        }
        Ok(Minimum {
            control,
            value,
            truncated,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn golden_section(
        &self,
        ws: &mut HamiltonianWorkspace<T>,
        t: T,
        s: T,
        x: &[T],
        theta: T,
        p: &[T],
        pp: &[T],
        mut a: T,
        mut b: T,
    ) -> Result<(T, T)> {
        let inv_phi = T::c(0.618_033_988_749_894_9);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = self.hamiltonian_with(ws, t, s, x, &[c], theta, p, pp)?;
        let mut fd = self.hamiltonian_with(ws, t, s, x, &[d], theta, p, pp)?;
        for _ in 0..64 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.hamiltonian_with(ws, t, s, x, &[c], theta, p, pp)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.hamiltonian_with(ws, t, s, x, &[d], theta, p, pp)?;
            }
        }
        let mid = T::half() * (a + b);
        let fm = self.hamiltonian_with(ws, t, s, x, &[mid], theta, p, pp)?;
        Ok((mid, fm))
    }

    /// Sampling checks of the coefficient regularity assumptions: finiteness,
    /// estimated Lipschitz moduli, and the declared structural flags.
    pub fn run_sampling_checks(&self, cfg: &SamplingCheckConfig<T>) -> Result<SamplingReport<T>> {
        self.validate()?;
        let n = self.dynamics.state_dim;
        let d = self.dynamics.noise_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let controls = self.controls.sample(cfg.samples, cfg.seed ^ 0x9e37);
        let (x_lo, x_hi) = cfg.state_range;
        let span = x_hi - x_lo;
        let draw_x = |rng: &mut ChaCha8Rng| -> Vec<T> {
            (0..n)
                .map(|_| x_lo + span * T::c(rng.random::<f64>()))
                .collect()
        };

        let mut lip_dynamics = T::zero();
        let mut lip_cost = T::zero();
        let mut b1 = vec![T::zero(); n];
        let mut b2 = vec![T::zero(); n];
        let mut s1 = vec![T::zero(); n * d];
        let mut s2 = vec![T::zero(); n * d];
        let mut sigma_free_violation = T::zero();
        let mut homogeneity_violation = T::zero();

        for i in 0..cfg.samples {
            let u = &controls[i % controls.len()];
            let x = draw_x(&mut rng);
            let mut x_other = draw_x(&mut rng);
            if x == x_other {
                let bump = T::c(1e-3) * (T::one() + x_other[0].abs());
                x_other[0] += bump;
            }
            let time = self.horizon * T::c(rng.random::<f64>());

            (self.dynamics.drift)(time, &x, u, &mut b1);
            (self.dynamics.drift)(time, &x_other, u, &mut b2);
            (self.dynamics.diffusion)(time, &x, u, &mut s1);
            (self.dynamics.diffusion)(time, &x_other, u, &mut s2);
            let num: T = b1
                .iter()
                .zip(&b2)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max)
                .max(
                    s1.iter()
                        .zip(&s2)
                        .map(|(a, b)| (*a - *b).abs())
                        .fold(T::zero(), T::max),
                );
            let den: T = x
                .iter()
                .zip(&x_other)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max);
            if !num.is_finite() {
                return Err(Error::eval("dynamics returned a non-finite value"));
            }
            if den > T::zero() {
                lip_dynamics = lip_dynamics.max(num / den);
            }

            let outer = time * T::c(rng.random::<f64>());
            let y = T::c(rng.random::<f64>() * 2.0 - 1.0);
            let z: Vec<T> = (0..d).map(|_| T::c(rng.random::<f64>() * 2.0 - 1.0)).collect();
            let g1 = (self.cost.generator)(outer, time, &x, u, y, &z);
            let g2 = (self.cost.generator)(outer, time, &x_other, u, y, &z);
            let h1 = (self.cost.free_term)(outer, &x);
            let h2 = (self.cost.free_term)(outer, &x_other);
            if !(g1.is_finite() && g2.is_finite() && h1.is_finite() && h2.is_finite()) {
                return Err(Error::eval("cost coefficients returned a non-finite value"));
            }
            if den > T::zero() {
                lip_cost = lip_cost.max(((g1 - g2).abs().max((h1 - h2).abs())) / den);
            }

            if self.dynamics.sigma_control_free && controls.len() > 1 {
                let u2 = &controls[(i + 1) % controls.len()];
                (self.dynamics.diffusion)(time, &x, u2, &mut s2);
                let dev = s1
                    .iter()
                    .zip(&s2)
                    .map(|(a, b)| (*a - *b).abs())
                    .fold(T::zero(), T::max);
                sigma_free_violation = sigma_free_violation.max(dev);
            }
            if self.cost.time_homogeneous_in_t {
                let outer2 = time * T::c(rng.random::<f64>());
                let g3 = (self.cost.generator)(outer2, time, &x, u, y, &z);
                let h3 = (self.cost.free_term)(outer2, &x);
                homogeneity_violation = homogeneity_violation
                    .max((g1 - g3).abs())
                    .max((h1 - h3).abs());
            }
        }

        let report = SamplingReport {
            lipschitz_dynamics: lip_dynamics,
            lipschitz_cost: lip_cost,
            sigma_free_violation,
            homogeneity_violation,
        };
        if lip_dynamics > cfg.lipschitz_bound || lip_cost > cfg.lipschitz_bound {
            return Err(Error::domain(format!(
                "sampled Lipschitz modulus exceeds bound {}: dynamics {}, cost {}",
                cfg.lipschitz_bound, lip_dynamics, lip_cost
            )));
        }
        let tol = T::c(1e-10);
        if report.sigma_free_violation > tol {
            return Err(Error::domain(
                "sigma_control_free is set but σ varies with the control on samples",
            ));
        }
        if report.homogeneity_violation > tol {
            return Err(Error::domain(
                "time_homogeneous_in_t is set but g or h varies with the outer time on samples",
            ));
        }
        Ok(report)
    }
}

/// Configuration of the coefficient sampling checks.
#[derive(Debug, Clone)]
pub struct SamplingCheckConfig<T> {
    pub samples: usize,
    pub lipschitz_bound: T,
    pub state_range: (T, T),
    pub seed: u64,
}

impl<T: Scalar> Default for SamplingCheckConfig<T> {
    fn default() -> Self {
        SamplingCheckConfig {
            samples: 1000,
            lipschitz_bound: T::c(1e4),
            state_range: (T::c(-5.0), T::c(5.0)),
            seed: 0x5eed,
        }
    }
}

/// Largest moduli observed by the sampling checks.
#[derive(Debug, Clone)]
pub struct SamplingReport<T> {
    pub lipschitz_dynamics: T,
    pub lipschitz_cost: T,
    pub sigma_free_violation: T,
    pub homogeneity_violation: T,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_spec(
        n: usize,
        d: usize,
        drift: impl Fn(T64, &[T64], &[T64], &mut [T64]) + Send + Sync + 'static,
        diffusion: impl Fn(T64, &[T64], &[T64], &mut [T64]) + Send + Sync + 'static,
        generator: impl Fn(T64, T64, &[T64], &[T64], T64, &[T64]) -> T64 + Send + Sync + 'static,
        controls: ControlSet<T64>,
    ) -> ProblemSpec<T64> {
        ProblemSpec {
            dynamics: ControlledDynamics {
                drift: Box::new(drift),
                diffusion: Box::new(diffusion),
                state_dim: n,
                noise_dim: d,
                sigma_control_free: false,
            },
            cost: CostSpec {
                generator: Box::new(generator),
                free_term: Box::new(|_t, x: &[f64]| x[0]),
                time_homogeneous_in_t: false,
            },
            controls,
            kernel: None,
            horizon: 1.0,
            minimizer: None,
            golden_refine: false,
        }
    }

    type T64 = f64;

    #[test]
    fn identity_diffusion_gives_half_trace() {
        // b ≡ 0, g ≡ 0, σ = I, P = I in two dimensions: value is n/2.
        let n = 2;
        let spec = unit_spec(
            n,
            n,
            |_t, _x, _u, out| out.fill(0.0),
            move |_t, _x, _u, out| {
                out.fill(0.0);
                out[0] = 1.0;
                out[3] = 1.0;
            },
            |_t, _s, _x, _u, _y, _z| 0.0,
            ControlSet::Finite(vec![vec![0.0]]),
        );
        let x = [0.3, -0.2];
        let p = [0.0, 0.0];
        let pp = [1.0, 0.0, 0.0, 1.0];
        let v = spec.hamiltonian(0.1, 0.5, &x, &[0.0], 0.0, &p, &pp).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_hamiltonian_by_direct_substitution() {
        // b = u, σ = 1, g = u²/2, p = 1, P = 0, u = 2 → 1·2 + 2 = 4.
        let spec = unit_spec(
            1,
            1,
            |_t, _x, u, out| out[0] = u[0],
            |_t, _x, _u, out| out[0] = 1.0,
            |_t, _s, _x, u, _y, _z| 0.5 * u[0] * u[0],
            ControlSet::Finite(vec![vec![2.0]]),
        );
        let v = spec
            .hamiltonian(0.0, 0.5, &[0.0], &[2.0], 0.0, &[1.0], &[0.0])
            .unwrap();
        assert!((v - 4.0).abs() < 1e-15);
    }

    #[test]
    fn matches_an_independent_term_by_term_evaluator() {
        // LQ coefficients; the oracle re-evaluates each Hamiltonian term from
        // scratch without going through the workspace machinery.
        let (a, bu, s0, q, ru) = (-0.4, 1.3, 0.6, 0.8, 1.1);
        let spec = unit_spec(
            1,
            1,
            move |_t, x, u, out| out[0] = a * x[0] + bu * u[0],
            move |_t, _x, _u, out| out[0] = s0,
            move |t, s, x, u, y, z| {
                (0.5 * (q * x[0] * x[0] + ru * u[0] * u[0])) * (-0.3 * (s - t)).exp()
                    - 0.2 * y
                    + 0.1 * z[0]
            },
            ControlSet::Finite(vec![vec![0.0]]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let t = 0.4 * rng.random::<f64>();
            let s = t + (1.0 - t) * rng.random::<f64>();
            let x = 4.0 * rng.random::<f64>() - 2.0;
            let u = 2.0 * rng.random::<f64>() - 1.0;
            let y = rng.random::<f64>();
            let p = 2.0 * rng.random::<f64>() - 1.0;
            let pp = 2.0 * rng.random::<f64>() - 1.0;
            let got = spec
                .hamiltonian(t, s, &[x], &[u], y, &[p], &[pp])
                .unwrap();
            let z = p * s0;
            let expect = 0.5 * pp * s0 * s0
                + p * (a * x + bu * u)
                + (0.5 * (q * x * x + ru * u * u)) * (-0.3f64 * (s - t)).exp()
                - 0.2 * y
                + 0.1 * z;
            assert!((got - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn singleton_control_set_returns_its_only_point() {
        let spec = unit_spec(
            1,
            1,
            |_t, _x, u, out| out[0] = u[0],
            |_t, _x, _u, out| out[0] = 1.0,
            |_t, _s, _x, u, _y, _z| u[0] * u[0],
            ControlSet::Finite(vec![vec![0.7]]),
        );
        let m = spec
            .minimize_hamiltonian(0.0, 0.5, &[0.0], 0.0, &[1.0], &[0.0])
            .unwrap();
        assert_eq!(m.control, vec![0.7]);
        let direct = spec
            .hamiltonian(0.0, 0.5, &[0.0], &[0.7], 0.0, &[1.0], &[0.0])
            .unwrap();
        assert_eq!(m.value, direct);
    }

    #[test]
    fn quadratic_box_minimum_sits_at_stationary_point() {
        // ℍ = p·u + u²/2 with p = 3 has minimizer u* = −3.
        let spec = {
            let mut s = unit_spec(
                1,
                1,
                |_t, _x, u, out| out[0] = u[0],
                |_t, _x, _u, out| out[0] = 0.0,
                |_t, _s, _x, u, _y, _z| 0.5 * u[0] * u[0],
                ControlSet::Box {
                    lo: vec![-10.0],
                    hi: vec![10.0],
                    resolution: 0.05,
                },
            );
            s.golden_refine = true;
            s
        };
        let m = spec
            .minimize_hamiltonian(0.0, 0.5, &[0.0], 0.0, &[3.0], &[0.0])
            .unwrap();
        assert!((m.control[0] + 3.0).abs() < 1e-6, "u* = {}", m.control[0]);
        assert!((m.value + 4.5).abs() < 1e-9);
        assert!(!m.truncated);

        // Grid scan cross-check without refinement: within one resolution.
        let mut coarse = spec;
        coarse.golden_refine = false;
        let mc = coarse
            .minimize_hamiltonian(0.0, 0.5, &[0.0], 0.0, &[3.0], &[0.0])
            .unwrap();
        assert!((mc.control[0] + 3.0).abs() <= 0.05 + 1e-12);
    }

    #[test]
    fn monotone_hamiltonian_picks_the_smallest_control() {
        let spec = unit_spec(
            1,
            1,
            |_t, _x, u, out| out[0] = u[0],
            |_t, _x, _u, out| out[0] = 0.0,
            |_t, _s, _x, _u, _y, _z| 0.0,
            ControlSet::Finite(vec![vec![-1.0], vec![0.0], vec![1.0]]),
        );
        // ℍ = p·u with p = 1 is strictly increasing in u.
        let m = spec
            .minimize_hamiltonian(0.0, 0.5, &[0.0], 0.0, &[1.0], &[0.0])
            .unwrap();
        assert_eq!(m.control, vec![-1.0]);
    }

    #[test]
    fn minimum_bounds_every_scanned_value() {
        let spec = unit_spec(
            1,
            1,
            |_t, _x, u, out| out[0] = u[0].sin(),
            |_t, _x, _u, out| out[0] = 0.4,
            |_t, _s, _x, u, y, _z| (u[0] - 0.3).cos() + 0.1 * y,
            ControlSet::Finite((0..21).map(|i| vec![-2.0 + 0.2 * i as f64]).collect()),
        );
        let (t, s, x, y, p, pp) = (0.2, 0.6, [0.4], -0.3, [0.8], [1.2]);
        let m = spec.minimize_hamiltonian(t, s, &x, y, &p, &pp).unwrap();
        if let ControlSet::Finite(points) = &spec.controls {
            for u in points {
                let v = spec.hamiltonian(t, s, &x, u, y, &p, &pp).unwrap();
                assert!(m.value <= v + 1e-15);
            }
        }
    }

    #[test]
    fn joint_positive_scaling_preserves_argmin_and_scales_value() {
        // Multiplying g and b by c and σ by √c scales ℍ by c when g ignores z.
        let build = |c: f64| {
            unit_spec(
                1,
                1,
                move |_t, x, u, out| out[0] = c * (-0.5 * x[0] + u[0]),
                move |_t, _x, _u, out| out[0] = c.sqrt() * 0.7,
                move |_t, _s, x, u, _y, _z| c * (x[0] * x[0] + (u[0] - 0.4) * (u[0] - 0.4)),
                ControlSet::Finite((0..9).map(|i| vec![-1.0 + 0.25 * i as f64]).collect()),
            )
        };
        let base = build(1.0);
        let scaled = build(3.5);
        let (t, s, x, y, p, pp) = (0.1, 0.7, [0.6], 0.0, [1.1], [0.9]);
        let m0 = base.minimize_hamiltonian(t, s, &x, y, &p, &pp).unwrap();
        let m1 = scaled.minimize_hamiltonian(t, s, &x, y, &p, &pp).unwrap();
        assert_eq!(m0.control, m1.control);
        assert!((m1.value - 3.5 * m0.value).abs() < 1e-12 * (1.0 + m1.value.abs()));
    }

    #[test]
    fn non_finite_coefficients_are_reported() {
        let spec = unit_spec(
            1,
            1,
            |_t, _x, _u, out| out[0] = f64::NAN,
            |_t, _x, _u, out| out[0] = 1.0,
            |_t, _s, _x, _u, _y, _z| 0.0,
            ControlSet::Finite(vec![vec![0.0]]),
        );
        assert!(matches!(
            spec.hamiltonian(0.0, 0.5, &[0.0], &[0.0], 0.0, &[1.0], &[0.0]),
            Err(Error::Eval(_))
        ));
        assert!(matches!(
            spec.minimize_hamiltonian(0.0, 0.5, &[0.0], 0.0, &[1.0], &[0.0]),
            Err(Error::Minimization(_))
        ));
    }

    #[test]
    fn sampling_checks_accept_lipschitz_coefficients() {
        let spec = unit_spec(
            1,
            1,
            |_t, x, u, out| out[0] = -0.3 * x[0] + u[0],
            |_t, _x, _u, out| out[0] = 0.5,
            |_t, _s, x, _u, y, _z| 0.5 * x[0] * x[0] - 0.2 * y,
            ControlSet::Box {
                lo: vec![-1.0],
                hi: vec![1.0],
                resolution: 0.5,
            },
        );
        let report = spec
            .run_sampling_checks(&SamplingCheckConfig::default())
            .unwrap();
        assert!(report.lipschitz_dynamics <= 1.0 + 1e-9);
    }

    #[test]
    fn sampling_checks_reject_false_structural_flags() {
        let mut spec = unit_spec(
            1,
            1,
            |_t, x, _u, out| out[0] = -x[0],
            |_t, _x, u, out| out[0] = 1.0 + 0.5 * u[0],
            |_t, _s, _x, _u, _y, _z| 0.0,
            ControlSet::Box {
                lo: vec![-1.0],
                hi: vec![1.0],
                resolution: 0.5,
            },
        );
        spec.dynamics.sigma_control_free = true;
        assert!(spec
            .run_sampling_checks(&SamplingCheckConfig::default())
            .is_err());
    }

    #[test]
    fn box_scan_visits_endpoints_in_lexicographic_order() {
        let set = ControlSet::Box {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 0.5],
            resolution: 0.5,
        };
        let mut seen = Vec::new();
        set.for_each_candidate(|u| seen.push(u.to_vec()));
        assert_eq!(seen.first().unwrap(), &vec![0.0, 0.0]);
        assert_eq!(seen.last().unwrap(), &vec![1.0, 0.5]);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert!(seen.contains(&vec![0.5, 0.0]));
    }
}
