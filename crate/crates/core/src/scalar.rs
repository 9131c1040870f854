//! The floating-point abstraction every solver is written against.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar usable by the grid, the schemes and the analyzers.
///
/// Implemented for `f32` and `f64`. Tolerances in the solvers are tuned for
/// `f64`; `f32` is fine for geometry and regularity measurements.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold,
    /// which never happens for `f32`/`f64`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Maximum of an iterator of reals, `-inf` when empty.
pub fn max_of<T: Real, I: IntoIterator<Item = T>>(it: I) -> T {
    it.into_iter().fold(T::neg_infinity(), T::max)
}

/// Minimum of an iterator of reals, `+inf` when empty.
pub fn min_of<T: Real, I: IntoIterator<Item = T>>(it: I) -> T {
    it.into_iter().fold(T::infinity(), T::min)
}

/// Sup norm of a slice.
pub fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// `(max - min) / max` of a nonempty set of positive measurements.
pub fn relative_spread<T: Real>(values: &[T]) -> T {
    let hi = max_of(values.iter().copied());
    let lo = min_of(values.iter().copied());
    if hi <= T::zero() {
        return T::zero();
    }
    (hi - lo) / hi
}
