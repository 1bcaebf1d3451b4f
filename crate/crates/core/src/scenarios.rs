//! Built-in scenario library: scalar linear-quadratic problems under the
//! shipped discount kernels, the heat check case, and the factorized
//! diagonal-coupling scenarios. The command-line driver and the test suites
//! share these definitions.

use crate::diagonal::{DiagonalProblem, FactorizedStructure};
use crate::kernel::DiscountKernel;
use crate::model::{ControlSet, ControlledDynamics, CostSpec, ProblemSpec};
use crate::scalar::Scalar;

/// Coefficients of the scalar linear-quadratic family:
/// `dX = (a X + b u) dr + σ dW`, running cost `½(q x² + r u²)` weighted by
/// the kernel's running factor, recursion `−λ_y y`, terminal `½ g x²`
/// weighted by the kernel's terminal factor.
#[derive(Debug, Clone)]
pub struct LqParams<T> {
    pub a: T,
    pub b_u: T,
    pub sigma0: T,
    pub q: T,
    pub r_u: T,
    pub g_term: T,
    pub lambda_y: T,
    pub kernel: Option<DiscountKernel<T>>,
    /// Weight `g` and `h` by the kernel's `(μ, ν)` factors. Off for the
    /// recursive exponential form, whose discounting lives in `λ_y`.
    pub apply_kernel_weights: bool,
    pub control_lo: T,
    pub control_hi: T,
    pub control_resolution: T,
}

impl<T: Scalar> LqParams<T> {
    pub fn base() -> Self {
        LqParams {
            a: T::c(-0.25),
            b_u: T::one(),
            sigma0: T::c(0.35),
            q: T::c(0.25),
            r_u: T::one(),
            g_term: T::c(0.5),
            lambda_y: T::c(0.3),
            kernel: None,
            apply_kernel_weights: false,
            control_lo: T::c(-4.0),
            control_hi: T::c(4.0),
            control_resolution: T::c(0.01),
        }
    }
}

/// A named problem with its recommended grids.
pub struct Scenario<T> {
    pub id: String,
    pub description: &'static str,
    pub spec: ProblemSpec<T>,
    /// Recommended spatial truncation.
    pub domain: (T, T),
    /// Interior region where oracle comparisons are meaningful.
    pub probe: (T, T),
    pub initial_state: T,
    pub lq: Option<LqParams<T>>,
}

/// Build the linear-quadratic problem for the given parameters.
pub fn build_lq<T: Scalar>(params: &LqParams<T>) -> ProblemSpec<T> {
    let LqParams {
        a,
        b_u,
        sigma0,
        q,
        r_u,
        g_term,
        lambda_y,
        ..
    } = *params;
    let kernel = params.kernel.clone();
    let weighted = params.apply_kernel_weights;
    let (lo, hi) = (params.control_lo, params.control_hi);

    let nu_kernel = kernel.clone();
    let running_weight = move |t: T, r: T| -> T {
        match (&nu_kernel, weighted) {
            (Some(k), true) => k.nu(t, r),
            _ => T::one(),
        }
    };
    let mu_kernel = kernel.clone();
    let h_horizon = move |t: T, horizon: T| -> T {
        match (&mu_kernel, weighted) {
            (Some(k), true) => k.mu(t, horizon),
            _ => T::one(),
        }
    };

    let horizon = T::one();
    let rw = running_weight.clone();
    let generator = move |t: T, r: T, x: &[T], u: &[T], y: T, _z: &[T]| -> T {
        rw(t, r) * T::half() * (q * x[0] * x[0] + r_u * u[0] * u[0]) - lambda_y * y
    };
    let free_term =
        move |t: T, x: &[T]| -> T { h_horizon(t, horizon) * T::half() * g_term * x[0] * x[0] };

    let rw2 = running_weight;
    let minimizer = move |t: T, s: T, _x: &[T], _th: T, p: &[T], _pp: &[T], out: &mut [T]| {
        let mut u = -p[0] * b_u / (rw2(t, s) * r_u);
        if u < lo {
            u = lo;
        }
        if u > hi {
            u = hi;
        }
        out[0] = u;
    };

    ProblemSpec {
        dynamics: ControlledDynamics {
            drift: Box::new(move |_t, x: &[T], u: &[T], out: &mut [T]| {
                out[0] = a * x[0] + b_u * u[0]
            }),
            diffusion: Box::new(move |_t, _x: &[T], _u: &[T], out: &mut [T]| out[0] = sigma0),
            state_dim: 1,
            noise_dim: 1,
            sigma_control_free: true,
        },
        cost: CostSpec {
            generator: Box::new(generator),
            free_term: Box::new(free_term),
            time_homogeneous_in_t: !weighted,
        },
        controls: ControlSet::Box {
            lo: vec![lo],
            hi: vec![hi],
            resolution: params.control_resolution,
        },
        kernel,
        horizon,
        minimizer: Some(Box::new(minimizer)),
        golden_refine: true,
    }
}

fn lq_scenario<T: Scalar>(id: &str, description: &'static str, params: LqParams<T>) -> Scenario<T> {
    Scenario {
        id: id.to_string(),
        description,
        spec: build_lq(&params),
        domain: (T::c(-4.0), T::c(4.0)),
        probe: (T::c(-1.0), T::c(1.0)),
        initial_state: T::c(0.3),
        lq: Some(params),
    }
}

/// The heat check case: zero drift, unit diffusion, zero running cost,
/// terminal `x²`; the field is `x² + (T − s)` in closed form.
pub fn heat_scenario<T: Scalar>() -> Scenario<T> {
    let spec = ProblemSpec {
        dynamics: ControlledDynamics {
            drift: Box::new(|_t, _x: &[T], _u: &[T], out: &mut [T]| out[0] = T::zero()),
            diffusion: Box::new(|_t, _x: &[T], _u: &[T], out: &mut [T]| out[0] = T::one()),
            state_dim: 1,
            noise_dim: 1,
            sigma_control_free: true,
        },
        cost: CostSpec {
            generator: Box::new(|_t, _r, _x: &[T], _u: &[T], _y, _z: &[T]| T::zero()),
            free_term: Box::new(|_t, x: &[T]| x[0] * x[0]),
            time_homogeneous_in_t: true,
        },
        controls: ControlSet::Finite(vec![vec![T::zero()]]),
        kernel: None,
        horizon: T::one(),
        minimizer: None,
        golden_refine: false,
    };
    Scenario {
        id: "heat".to_string(),
        description: "zero drift, unit diffusion, terminal x squared; closed-form field",
        spec,
        domain: (T::c(-8.0), T::c(8.0)),
        probe: (T::c(-2.0), T::c(2.0)),
        initial_state: T::zero(),
        lq: None,
    }
}

/// Scenario ids of the control problems.
pub fn scenario_ids() -> &'static [&'static str] {
    &[
        "lq-exponential",
        "lq-heterogeneous",
        "lq-hyperbolic",
        "lq-quasi-exponential",
        "heat",
    ]
}

/// Look up a built-in control scenario.
pub fn by_id<T: Scalar>(id: &str) -> Option<Scenario<T>> {
    match id {
        "lq-exponential" => {
            let params = LqParams {
                kernel: Some(DiscountKernel::Exponential { lambda: T::c(0.3) }),
                apply_kernel_weights: false,
                lambda_y: T::c(0.3),
                ..LqParams::base()
            };
            Some(lq_scenario(
                id,
                "recursive exponential discounting; time-consistent reduction case",
                params,
            ))
        }
        "lq-heterogeneous" => {
            let params = LqParams {
                kernel: Some(DiscountKernel::Heterogeneous {
                    lambda1: T::c(0.1),
                    lambda2: T::c(0.6),
                }),
                apply_kernel_weights: true,
                lambda_y: T::c(0.5),
                ..LqParams::base()
            };
            Some(lq_scenario(
                id,
                "different terminal and running discount rates with a recursive term",
                params,
            ))
        }
        "lq-hyperbolic" => {
            let params = LqParams {
                kernel: Some(DiscountKernel::Hyperbolic {
                    lambda1: T::c(0.5),
                    lambda2: T::one(),
                }),
                apply_kernel_weights: true,
                lambda_y: T::c(0.3),
                ..LqParams::base()
            };
            Some(lq_scenario(
                id,
                "hyperbolic discounting (no kernel factorization exists)",
                params,
            ))
        }
        "lq-quasi-exponential" => {
            let params = LqParams {
                kernel: Some(DiscountKernel::QuasiExponential {
                    alpha: T::c(0.5),
                    lambda: T::c(0.4),
                }),
                apply_kernel_weights: true,
                lambda_y: T::c(0.3),
                ..LqParams::base()
            };
            Some(lq_scenario(
                id,
                "quasi-exponential discounting with a recursive term",
                params,
            ))
        }
        "heat" => Some(heat_scenario()),
        _ => None,
    }
}

/// Coefficients shared by the diagonal-coupling scenarios.
#[derive(Debug, Clone, Copy)]
pub struct DiagonalParams<T> {
    pub a: T,
    pub sigma0: T,
    pub q: T,
    pub couple_y: T,
    pub couple_z: T,
    pub g_term: T,
    pub z_weight: T,
}

impl<T: Scalar> DiagonalParams<T> {
    pub fn base() -> Self {
        DiagonalParams {
            a: T::c(-0.25),
            sigma0: T::c(0.35),
            q: T::c(0.25),
            couple_y: T::c(0.3),
            couple_z: T::c(0.2),
            g_term: T::c(0.5),
            z_weight: T::c(0.1),
        }
    }
}

/// A named diagonal-coupling scenario.
pub struct DiagonalScenario<T> {
    pub id: String,
    pub description: &'static str,
    pub problem: DiagonalProblem<T>,
    pub domain: (T, T),
    pub initial_state: T,
}

/// Build the factorized diagonal problem for a kernel.
pub fn build_diagonal<T: Scalar>(
    kernel: DiscountKernel<T>,
    params: DiagonalParams<T>,
) -> DiagonalProblem<T> {
    let DiagonalParams {
        a,
        sigma0,
        q,
        couple_y,
        couple_z,
        g_term,
        z_weight,
    } = params;
    let horizon = T::one();

    let base_running =
        move |_s: T, x: &[T], y: T, zeta: &[T]| -> T {
            T::half() * q * x[0] * x[0] + couple_y * y + couple_z * zeta[0]
        };
    let base_terminal = move |_t: T, x: &[T]| -> T { T::half() * g_term * x[0] * x[0] };

    let gen_kernel = kernel.clone();
    let generator = move |t: T, s: T, x: &[T], y: T, z: &[T], zeta: &[T]| -> T {
        gen_kernel.nu(t, s) * base_running(s, x, y, zeta) + z[0] * z_weight
    };
    let free_kernel = kernel.clone();
    let free_term = move |t: T, x: &[T]| -> T { free_kernel.mu(t, horizon) * base_terminal(horizon, x) };

    DiagonalProblem {
        drift: Box::new(move |_r: T, x: &[T], y: T, zeta: &[T], out: &mut [T]| {
            out[0] = a * x[0] + couple_y * y + couple_z * zeta[0]
        }),
        diffusion: Box::new(move |_r: T, _x: &[T], out: &mut [T]| out[0] = sigma0),
        generator: Box::new(generator),
        free_term: Box::new(free_term),
        dim: 1,
        horizon,
        structure: Some(FactorizedStructure {
            kernel,
            terminal_base: Box::new(base_terminal),
            running_base: Box::new(base_running),
            z_weight: Box::new(move |_s: T, out: &mut [T]| out[0] = z_weight),
        }),
        sigma_depends_on_y: false,
    }
}

pub fn diagonal_ids() -> &'static [&'static str] {
    &["diag-heterogeneous", "diag-exponential"]
}

/// Look up a built-in diagonal-coupling scenario.
pub fn diagonal_by_id<T: Scalar>(id: &str) -> Option<DiagonalScenario<T>> {
    let kernel = match id {
        "diag-heterogeneous" => DiscountKernel::Heterogeneous {
            lambda1: T::c(0.1),
            lambda2: T::c(0.6),
        },
        "diag-exponential" => DiscountKernel::Exponential { lambda: T::c(0.3) },
        _ => return None,
    };
    let description = match id {
        "diag-heterogeneous" => "factorized diagonal coupling under heterogeneous discounting",
        _ => "factorized diagonal coupling under exponential discounting (shift factor vanishes)",
    };
    Some(DiagonalScenario {
        id: id.to_string(),
        description,
        problem: build_diagonal(kernel, DiagonalParams::base()),
        domain: (T::c(-4.0), T::c(4.0)),
        initial_state: T::c(0.3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplingCheckConfig;

    #[test]
    fn all_scenarios_pass_their_sampling_checks() {
        for id in scenario_ids() {
            let sc = by_id::<f64>(id).unwrap();
            sc.spec
                .run_sampling_checks(&SamplingCheckConfig::default())
                .unwrap_or_else(|e| panic!("{id}: {e}"));
        }
    }

    #[test]
    fn diagonal_scenarios_satisfy_their_structure_identities() {
        for id in diagonal_ids() {
            let sc = diagonal_by_id::<f64>(id).unwrap();
            let worst = sc.problem.verify_structure(500, 99).unwrap();
            assert!(worst <= 1e-12, "{id}: residual {worst}");
        }
    }

    #[test]
    fn unknown_ids_are_none() {
        assert!(by_id::<f64>("nope").is_none());
        assert!(diagonal_by_id::<f64>("nope").is_none());
    }
}
