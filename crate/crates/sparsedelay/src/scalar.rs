//! Scalar abstraction for the numeric core.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the library is generic over.
///
/// `f32` and `f64` both qualify. The bound combines nalgebra's field
/// operations (needed by the dense factorizations) with `num-traits`
/// conversions used for literals and reporting.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy {
    /// Lossy conversion to `f64` for diagnostics and serialization.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("real scalar must convert to f64")
    }
}

impl<T> Real for T where T: RealField + FromPrimitive + ToPrimitive + Copy {}

/// Shorthand for converting an `f64` literal into the generic scalar.
#[inline]
pub fn r<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal must be representable in the scalar type")
}

/// `usize` to scalar conversion (grid sizes, counts).
#[inline]
pub fn ri<T: Real>(x: usize) -> T {
    T::from_usize(x).expect("count must be representable in the scalar type")
}
