use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point type used for probabilities. Implemented for `f32` and
/// `f64`.
pub trait Probability: Float + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static {
    /// Tolerance for "sums to one" checks: `base`, widened to a few ulps of
    /// the type when `base` is below its resolution.
    fn tolerance(base: f64) -> Self {
        let t = Self::from_f64(base).unwrap();
        let floor = Self::epsilon() * Self::from_u8(64).unwrap();
        if t > floor {
            t
        } else {
            floor
        }
    }

    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl<T> Probability for T where T: Float + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static {}
