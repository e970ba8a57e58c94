//! Scalar abstraction: the whole crate computes over any [`Real`], with `f32`
//! and `f64` as the provided instances.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable for all geometry and energy computation.
///
/// `Into<f64>` must be exact (it is for `f32` and `f64`), so the robust
/// geometric predicates can widen coordinates without changing their sign.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Into<f64>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an `f64` literal into this scalar type.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal must be representable")
    }

    /// Lossless widening to `f64`.
    #[inline]
    fn to_double(self) -> f64 {
        self.into()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widening_is_exact() {
        let x: f32 = 0.1;
        assert_eq!(x.to_double() as f32, x);
        let y: f64 = 0.1;
        assert_eq!(y.to_double(), y);
    }

    #[test]
    fn literal_conversion() {
        assert_eq!(f64::of(2.5), 2.5);
        assert_eq!(f32::of(2.5), 2.5f32);
    }
}
