//! Scalar abstraction shared by every solver.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the dense solvers: `f32` or `f64`.
///
/// All tolerances in this crate are written as `f64` literals and converted with
/// [`Real::lit`]; the defaults are calibrated for `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    /// Lossy conversion to `f64`, used for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize must be representable")
    }

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}
