//! Numeric traits shared by the generic parts of the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating point scalar used by labelling, normalization, the MLP and the
/// reliability score. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant. Panics only for values the type cannot
    /// represent at all, which never happens for finite literals.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite constant")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize fits in float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumCast
        + Debug
        + Display
        + LowerExp
        + Default
        + Sum
        + Send
        + Sync
        + 'static
{
}

/// Exact-or-float price arithmetic for the backtester. Unlike [`Scalar`] this
/// admits exact rationals (`num_rational::Ratio<i64>`), which the accounting
/// identity tests rely on.
pub trait PriceValue: num_traits::Num + Copy + PartialOrd + Debug + Send + Sync + 'static {}

impl<T> PriceValue for T where T: num_traits::Num + Copy + PartialOrd + Debug + Send + Sync + 'static
{}

/// Converts a small integer into any [`PriceValue`] by repeated addition of one.
/// Only used for constants such as 100 in percentage conversions.
pub(crate) fn small_int<T: PriceValue>(n: u32) -> T {
    let mut acc = T::zero();
    for _ in 0..n {
        acc = acc + T::one();
    }
    acc
}
