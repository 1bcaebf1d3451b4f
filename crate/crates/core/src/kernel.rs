//! Discount kernels `(μ, ν)` weighting terminal and running costs, and the
//! scale/shift factorizations that reduce diagonal-coupled systems to plain
//! forward-backward ones.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which of the two discount weights to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    /// μ(t, T): weight on the terminal cost.
    Terminal,
    /// ν(t, r): weight on the running cost.
    Running,
}

/// The built-in discounting families. Non-exponential kinds make the control
/// problem time-inconsistent.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscountKernel<T> {
    Exponential { lambda: T },
    Hyperbolic { lambda1: T, lambda2: T },
    Heterogeneous { lambda1: T, lambda2: T },
    ConvexCombination { alpha: T, lambda1: T, lambda2: T },
    QuasiExponential { alpha: T, lambda: T },
}

impl<T: Scalar> DiscountKernel<T> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DiscountKernel::Exponential { .. } => "exponential",
            DiscountKernel::Hyperbolic { .. } => "hyperbolic",
            DiscountKernel::Heterogeneous { .. } => "heterogeneous",
            DiscountKernel::ConvexCombination { .. } => "convex-combination",
            DiscountKernel::QuasiExponential { .. } => "quasi-exponential",
        }
    }

    /// All rates must be nonnegative; mixture weights must lie in (0, 1).
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        let ok = match *self {
            DiscountKernel::Exponential { lambda } => lambda >= zero,
            DiscountKernel::Hyperbolic { lambda1, lambda2 }
            | DiscountKernel::Heterogeneous { lambda1, lambda2 } => {
                lambda1 >= zero && lambda2 >= zero
            }
            DiscountKernel::ConvexCombination {
                alpha,
                lambda1,
                lambda2,
            } => alpha > zero && alpha < one && lambda1 >= zero && lambda2 >= zero,
            DiscountKernel::QuasiExponential { alpha, lambda } => alpha >= zero && lambda >= zero,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "invalid {} kernel parameters",
                self.kind_name()
            )))
        }
    }

    /// μ(t, horizon): both arguments in forward order, `t <= horizon`.
    #[inline]
    pub fn mu(&self, t: T, horizon: T) -> T {
        self.weight(horizon - t, true)
    }

    /// ν(t, r): weight applied at inner time `r >= t`.
    #[inline]
    pub fn nu(&self, t: T, r: T) -> T {
        self.weight(r - t, false)
    }

    fn weight(&self, gap: T, terminal: bool) -> T {
        let one = T::one();
        match *self {
            DiscountKernel::Exponential { lambda } => (-lambda * gap).exp(),
            DiscountKernel::Hyperbolic { lambda1, lambda2 } => {
                let rate = if terminal { lambda1 } else { lambda2 };
                one / (one + rate * gap)
            }
            DiscountKernel::Heterogeneous { lambda1, lambda2 } => {
                let rate = if terminal { lambda1 } else { lambda2 };
                (-rate * gap).exp()
            }
            DiscountKernel::ConvexCombination {
                alpha,
                lambda1,
                lambda2,
            } => alpha * (-lambda1 * gap).exp() + (one - alpha) * (-lambda2 * gap).exp(),
            DiscountKernel::QuasiExponential { alpha, lambda } => {
                (one + alpha * gap) * (-lambda * gap).exp()
            }
        }
    }

    /// Evaluate μ or ν with the domain check `0 <= t <= r`.
    pub fn eval(&self, part: KernelPart, t: T, r: T) -> Result<T> {
        if t > r {
            return Err(Error::domain(format!(
                "discount weight needs t <= r, got t = {t}, r = {r}"
            )));
        }
        if t < T::zero() {
            return Err(Error::domain(format!("negative time t = {t}")));
        }
        Ok(match part {
            KernelPart::Terminal => self.mu(t, r),
            KernelPart::Running => self.nu(t, r),
        })
    }

    /// The scale/shift factorization for this kernel on `[0, horizon]`.
    ///
    /// The hyperbolic family has no such factorization and is reported as
    /// unsupported rather than approximated.
    pub fn factorize(&self, horizon: T) -> Result<KernelFactorization<T>> {
        self.validate()?;
        let one = T::one();
        match *self {
            DiscountKernel::Exponential { lambda } => Ok(KernelFactorization::from_parts(
                move |t: T| (-lambda * t).exp(),
                T::zero(),
                |_t: T| T::zero(),
                |_t: T, _s: T| T::zero(),
            )),
            DiscountKernel::Heterogeneous { lambda1, lambda2 } => {
                let d = lambda2 - lambda1;
                Ok(KernelFactorization::from_parts(
                    move |t: T| (-lambda1 * t).exp(),
                    T::zero(),
                    move |r: T| (-lambda2 * r).exp(),
                    move |t: T, s: T| (d * t).exp() - (d * s).exp(),
                ))
            }
            DiscountKernel::ConvexCombination {
                alpha,
                lambda1,
                lambda2,
            } => {
                let d = lambda2 - lambda1;
                let w = one - alpha;
                Ok(KernelFactorization::from_parts(
                    move |t: T| (-lambda1 * t).exp(),
                    w * (-lambda2 * horizon).exp(),
                    move |r: T| w * (-lambda2 * r).exp(),
                    move |t: T, s: T| (d * t).exp() - (d * s).exp(),
                ))
            }
            DiscountKernel::QuasiExponential { alpha, lambda } => {
                Ok(KernelFactorization::from_parts(
                    move |t: T| (-lambda * t).exp(),
                    alpha * (-lambda * horizon).exp(),
                    move |r: T| alpha * (-lambda * r).exp(),
                    |t: T, s: T| s - t,
                ))
            }
            DiscountKernel::Hyperbolic { .. } => Err(Error::unsupported(
                "hyperbolic kernels admit no scale/shift factorization",
            )),
        }
    }
}

type TimeMap<T> = Box<dyn Fn(T) -> T + Send + Sync>;
type PairMap<T> = Box<dyn Fn(T, T) -> T + Send + Sync>;

/// Factorization `(𝓜, 𝓝, 𝓚, M)` of a discount kernel:
///
/// ```text
/// 𝓜(t)·μ(t,T) − 𝓜(s)·μ(s,T) = M(t,s)·𝓝
/// 𝓜(t)·ν(t,r) − 𝓜(s)·ν(s,r) = M(t,s)·𝓚(r)
/// ```
pub struct KernelFactorization<T> {
    /// 𝓜: positive scaling of the outer time.
    pub scale: TimeMap<T>,
    /// 𝓝: constant weight on the terminal base cost.
    pub terminal_weight: T,
    /// 𝓚: weight on the running base cost.
    pub running_weight: TimeMap<T>,
    /// M: two-time shift factor.
    pub shift: PairMap<T>,
}

impl<T: Scalar> KernelFactorization<T> {
    fn from_parts(
        scale: impl Fn(T) -> T + Send + Sync + 'static,
        terminal_weight: T,
        running_weight: impl Fn(T) -> T + Send + Sync + 'static,
        shift: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        KernelFactorization {
            scale: Box::new(scale),
            terminal_weight,
            running_weight: Box::new(running_weight),
            shift: Box::new(shift),
        }
    }

    /// Largest violation of the two factorization identities over a uniform
    /// grid of `points` times on `[0, horizon]`. Also checks 𝓜 > 0.
    pub fn max_identity_residual(
        &self,
        kernel: &DiscountKernel<T>,
        horizon: T,
        points: usize,
    ) -> Result<T> {
        if points < 2 {
            return Err(Error::domain("identity check needs at least 2 grid points"));
        }
        let dt = horizon / T::of_usize(points - 1);
        let times: Vec<T> = (0..points).map(|i| dt * T::of_usize(i)).collect();
        let mut worst = T::zero();
        for &t in &times {
            let m_t = (self.scale)(t);
            if !(m_t > T::zero()) {
                return Err(Error::domain(format!("scale not positive at t = {t}")));
            }
            for &s in &times {
                let m_s = (self.scale)(s);
                let shift = (self.shift)(t, s);
                let lhs_mu = m_t * kernel.mu(t, horizon) - m_s * kernel.mu(s, horizon);
                let res_mu = (lhs_mu - shift * self.terminal_weight).abs();
                if res_mu > worst {
                    worst = res_mu;
                }
                for &r in &times {
                    let lhs_nu = m_t * kernel.nu(t, r) - m_s * kernel.nu(s, r);
                    let res_nu = (lhs_nu - shift * (self.running_weight)(r)).abs();
                    if res_nu > worst {
                        worst = res_nu;
                    }
                }
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_exponential_is_flat() {
        let k = DiscountKernel::Exponential { lambda: 0.0f64 };
        assert_eq!(k.eval(KernelPart::Terminal, 0.3, 0.9).unwrap(), 1.0);
        assert_eq!(k.eval(KernelPart::Running, 0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn hyperbolic_running_weight_halves_at_unit_gap() {
        let k = DiscountKernel::Hyperbolic {
            lambda1: 0.7f64,
            lambda2: 1.0,
        };
        assert_eq!(k.eval(KernelPart::Running, 0.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn quasi_exponential_with_zero_rate_grows_linearly() {
        let k = DiscountKernel::QuasiExponential {
            alpha: 1.0f64,
            lambda: 0.0,
        };
        assert_eq!(k.eval(KernelPart::Terminal, 0.0, 2.0).unwrap(), 3.0);
    }

    #[test]
    fn reversed_arguments_are_a_domain_error() {
        let k = DiscountKernel::Exponential { lambda: 1.0f64 };
        assert!(matches!(
            k.eval(KernelPart::Running, 0.5, 0.2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weights_equal_one_on_the_diagonal_for_all_kinds() {
        let kernels: Vec<DiscountKernel<f64>> = vec![
            DiscountKernel::Exponential { lambda: 0.4 },
            DiscountKernel::Hyperbolic {
                lambda1: 0.5,
                lambda2: 1.2,
            },
            DiscountKernel::Heterogeneous {
                lambda1: 0.1,
                lambda2: 0.6,
            },
            DiscountKernel::ConvexCombination {
                alpha: 0.3,
                lambda1: 0.2,
                lambda2: 0.9,
            },
            DiscountKernel::QuasiExponential {
                alpha: 0.5,
                lambda: 0.4,
            },
        ];
        for k in &kernels {
            for &t in &[0.0, 0.37, 1.0] {
                assert!((k.mu(t, t) - 1.0).abs() < 1e-15, "{}", k.kind_name());
                assert!((k.nu(t, t) - 1.0).abs() < 1e-15, "{}", k.kind_name());
            }
        }
    }

    #[test]
    fn mu_and_nu_coincide_where_the_formulas_coincide() {
        let exp = DiscountKernel::Exponential { lambda: 0.4f64 };
        let het = DiscountKernel::Heterogeneous {
            lambda1: 0.4f64,
            lambda2: 0.4,
        };
        for &t in &[0.0, 0.2, 0.8] {
            assert_eq!(exp.mu(t, 1.0), exp.nu(t, 1.0));
            assert_eq!(het.mu(t, 1.0), het.nu(t, 1.0));
        }
    }

    #[test]
    fn heterogeneous_factorization_matches_closed_form() {
        let (l1, l2) = (0.1f64, 0.6);
        let k = DiscountKernel::Heterogeneous {
            lambda1: l1,
            lambda2: l2,
        };
        let f = k.factorize(1.0).unwrap();
        assert_eq!((f.scale)(0.5), (-l1 * 0.5f64).exp());
        assert_eq!(f.terminal_weight, 0.0);
        assert_eq!((f.running_weight)(0.3), (-l2 * 0.3f64).exp());
        let d = l2 - l1;
        assert_eq!((f.shift)(0.2, 0.7), (d * 0.2f64).exp() - (d * 0.7f64).exp());
    }

    #[test]
    fn quasi_exponential_factorization_matches_closed_form() {
        let (alpha, lambda, horizon) = (0.5f64, 0.4, 1.0);
        let k = DiscountKernel::QuasiExponential { alpha, lambda };
        let f = k.factorize(horizon).unwrap();
        assert_eq!((f.scale)(0.25), (-lambda * 0.25f64).exp());
        assert_eq!(f.terminal_weight, alpha * (-lambda * horizon).exp());
        assert_eq!((f.running_weight)(0.8), alpha * (-lambda * 0.8f64).exp());
        assert_eq!((f.shift)(0.2, 0.9), 0.7);
    }

    #[test]
    fn exponential_factorization_has_vanishing_differences() {
        let k = DiscountKernel::Exponential { lambda: 0.3f64 };
        let f = k.factorize(1.0).unwrap();
        assert_eq!(f.terminal_weight, 0.0);
        assert_eq!((f.shift)(0.1, 0.9), 0.0);
        assert!(f.max_identity_residual(&k, 1.0, 21).unwrap() < 1e-15);
    }

    #[test]
    fn hyperbolic_factorization_is_unsupported() {
        let k = DiscountKernel::Hyperbolic {
            lambda1: 0.5f64,
            lambda2: 1.0,
        };
        assert!(matches!(k.factorize(1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn factorization_identities_hold_on_a_grid() {
        let kernels: Vec<DiscountKernel<f64>> = vec![
            DiscountKernel::Heterogeneous {
                lambda1: 0.1,
                lambda2: 0.6,
            },
            DiscountKernel::ConvexCombination {
                alpha: 0.3,
                lambda1: 0.2,
                lambda2: 0.9,
            },
            DiscountKernel::QuasiExponential {
                alpha: 0.5,
                lambda: 0.4,
            },
        ];
        for k in &kernels {
            let f = k.factorize(1.0).unwrap();
            let worst = f.max_identity_residual(k, 1.0, 50).unwrap();
            assert!(worst <= 1e-12, "{}: residual {worst}", k.kind_name());
        }
    }
}
