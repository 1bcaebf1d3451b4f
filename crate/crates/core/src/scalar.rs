use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the numerical kernels are generic over: `f32` or `f64`.
///
/// Concrete aliases at the crate root fix `f64` as the default precision.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Lift an `f64` constant into the scalar type.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// Lift a count into the scalar type.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }

    #[inline]
    fn half() -> Self {
        Self::c(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::c(2.0)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + NumAssign + Debug + Display + LowerExp + Send + Sync + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifts_constants_for_both_widths() {
        assert_eq!(<f64 as Scalar>::c(0.25), 0.25);
        assert_eq!(<f32 as Scalar>::c(0.25), 0.25f32);
        assert_eq!(<f64 as Scalar>::of_usize(7), 7.0);
    }
}
