//! Scalar abstraction for the whole crate.
//!
//! Every numerical routine here is written against [`Scalar`] rather than a
//! concrete float type, so the same code instantiates at `f32` and `f64`.
//! Concrete `f64` aliases for the main public types live at the crate root.

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: IEEE float semantics plus conversions from
/// primitive literals. Implemented for `f32` and `f64` (and anything else
/// satisfying the bounds).
pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent ordinary finite constants, which cannot happen for the
    /// provided float instantiations.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal must convert to Scalar")
    }

    /// Converts a `usize` count (saturating at the type's maximum).
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::max_value)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
}
