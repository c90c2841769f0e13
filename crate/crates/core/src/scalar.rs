//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the model, policy, learners and solvers are generic over.
///
/// `CHECK_TOL` is the absolute tolerance used by internal consistency checks
/// (row sums, Bellman residuals). It is looser for `f32` because those checks
/// cannot reach `1e-10` in single precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    const CHECK_TOL: f64;

    /// Converts an `f64` literal. Panics only for values the type cannot represent at all.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn check_tol() -> Self {
        Self::lit(Self::CHECK_TOL)
    }
}

impl Scalar for f32 {
    const CHECK_TOL: f64 = 1e-4;
}

impl Scalar for f64 {
    const CHECK_TOL: f64 = 1e-10;
}
