//! Independent reference values for the numerical test suites.
//!
//! Everything here is deliberately self-contained: plain `f64`, no dependency
//! on the solver crate, and simple textbook methods (RK4, brute-force Monte
//! Carlo). These references cross-check the production solvers and must not
//! share code with them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parameters of the scalar linear-quadratic problem used across the tests.
///
/// Dynamics `dX = (a X + b u) dr + σ dW`, running cost
/// `½(q x² + r u²) − λ_y y` (recursive form), terminal cost `½ g x²`.
#[derive(Debug, Clone, Copy)]
pub struct LqProblem {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub q: f64,
    pub r: f64,
    pub g: f64,
    pub lambda_y: f64,
    pub horizon: f64,
}

/// Backward RK4 solution of the scalar Riccati pair
///
/// ```text
/// P' = −2a P + (b²/r) P² − q + λ_y P,     P(T) = g
/// c' = λ_y c − ½ σ² P,                    c(T) = 0
/// ```
///
/// returning `(P(t), c(t))`. The optimal value is `½ P(t) x² + c(t)` and the
/// optimal feedback is `u = −(b/r) P(t) x`.
pub fn riccati_pair(lq: &LqProblem, t: f64, steps: usize) -> (f64, f64) {
    assert!(t <= lq.horizon);
    let dt = (lq.horizon - t) / steps as f64;
    let fp = |p: f64| -2.0 * lq.a * p + lq.b * lq.b / lq.r * p * p - lq.q + lq.lambda_y * p;
    let fc = |p: f64, c: f64| lq.lambda_y * c - 0.5 * lq.sigma * lq.sigma * p;
    let mut p = lq.g;
    let mut c = 0.0;
    // march backward from T to t; RK4 on the reversed clock
    for _ in 0..steps {
        let (k1p, k1c) = (fp(p), fc(p, c));
        let (k2p, k2c) = (fp(p - 0.5 * dt * k1p), fc(p - 0.5 * dt * k1p, c - 0.5 * dt * k1c));
        let (k3p, k3c) = (fp(p - 0.5 * dt * k2p), fc(p - 0.5 * dt * k2p, c - 0.5 * dt * k2c));
        let (k4p, k4c) = (fp(p - dt * k3p), fc(p - dt * k3p, c - dt * k3c));
        p -= dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        c -= dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
    }
    (p, c)
}

/// Value function of the LQ problem at `(t, x)` from the Riccati reference.
pub fn lq_value(lq: &LqProblem, t: f64, x: f64, steps: usize) -> f64 {
    let (p, c) = riccati_pair(lq, t, steps);
    0.5 * p * x * x + c
}

/// Optimal LQ feedback gain at `t`: `u = −gain(t)·x`.
pub fn lq_feedback_gain(lq: &LqProblem, t: f64, steps: usize) -> f64 {
    let (p, _) = riccati_pair(lq, t, steps);
    lq.b / lq.r * p
}

/// Closed-form field for the heat check: zero drift, unit diffusion, zero
/// generator, terminal `x²` gives `Θ(t, s, x) = x² + (T − s)`.
pub fn heat_theta(s: f64, x: f64, horizon: f64) -> f64 {
    x * x + (horizon - s)
}

/// Mean of the scalar linear SDE `dX = a X dr` started at `x`: `x·e^{aΔ}`.
pub fn linear_mean(a: f64, x: f64, gap: f64) -> f64 {
    x * (a * gap).exp()
}

/// Brute-force conditional expectation `E[f(X_T) | X_s = x]` for the scalar
/// SDE `dX = a X dr + σ dW` by direct simulation (exact Gaussian transition).
pub fn conditional_mean_mc(
    a: f64,
    sigma: f64,
    x: f64,
    gap: f64,
    f: impl Fn(f64) -> f64,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = linear_mean(a, x, gap);
    let var = if a.abs() < 1e-12 {
        sigma * sigma * gap
    } else {
        sigma * sigma * ((2.0 * a * gap).exp() - 1.0) / (2.0 * a)
    };
    let sd = var.sqrt();
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    for _ in 0..n_samples {
        let z: f64 = standard_normal(&mut rng);
        let v = f(mean + sd * z);
        acc += v;
        acc2 += v * v;
    }
    let est = acc / n_samples as f64;
    let se = ((acc2 / n_samples as f64 - est * est).max(0.0) / n_samples as f64).sqrt();
    (est, se)
}

/// Log-log least-squares slope of `ys` against `xs`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..xs.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    num / den
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; the oracle must not share the solver crate's sampler.
    loop {
        let u1: f64 = rng.random();
        if u1 > 0.0 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riccati_reference_reproduces_the_constant_coefficient_case() {
        // With b = 0, λ_y = 0 the pair integrates in closed form:
        // P' = −2aP − q is linear.
        let lq = LqProblem {
            a: -0.5,
            b: 0.0,
            sigma: 0.0,
            q: 1.0,
            r: 1.0,
            g: 1.0,
            lambda_y: 0.0,
            horizon: 1.0,
        };
        let (p, _) = riccati_pair(&lq, 0.0, 512);
        // P(t) = e^{2a(T−t)}(g + q/(2a)) − q/(2a)
        let expect = (2.0f64 * -0.5).exp() * (1.0 - 1.0) + 1.0 * (1.0 - (-1.0f64).exp());
        assert!((p - expect).abs() < 1e-10, "{p} vs {expect}");
    }

    #[test]
    fn conditional_mean_mc_matches_gaussian_moments() {
        let (m, se) = conditional_mean_mc(0.0, 1.0, 0.0, 1.0, |x| x * x, 200_000, 9);
        assert!((m - 1.0).abs() < 5.0 * se.max(1e-3));
    }

    #[test]
    fn loglog_slope_recovers_powers() {
        let xs = [0.2, 0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((loglog_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }
}
