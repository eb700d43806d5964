//! Scalar abstraction shared by the network engine and the coordination math.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable throughout the crate: `f32` for experiment runs,
/// `f64` for the finite-difference and oracle paths.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Converts between scalar types through `f64`.
    fn cast<U: Scalar>(self) -> U {
        U::lit(self.as_f64())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
