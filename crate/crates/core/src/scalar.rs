//! Scalar abstraction over the floating-point types the library supports.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the numeric core is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for numeric literals in generic code.
    fn of_f64(v: f64) -> Self;

    /// Widening (for `f32`: exact) conversion to `f64`.
    fn into_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
}

/// Squared Euclidean distance between two equal-length vectors.
#[inline]
pub fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc = acc + d * d;
    }
    acc
}

/// Euclidean distance between two equal-length vectors.
#[inline]
pub fn l2_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    sq_dist(a, b).sqrt()
}

/// Euclidean norm.
#[inline]
pub fn l2_norm<S: Scalar>(a: &[S]) -> S {
    let mut acc = S::zero();
    for x in a {
        acc = acc + *x * *x;
    }
    acc.sqrt()
}
