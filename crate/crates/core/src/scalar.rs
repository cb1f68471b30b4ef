//! Scalar abstractions.
//!
//! Physical-layer math (Lambert-W, log-SNR statistics, closed-form power
//! allocation) is written against [`Real`], i.e. `f32` or `f64`.
//!
//! Value tables, Bellman backups and the bound machinery only need an
//! ordered field, so they are written against [`Cost`]. Besides the float
//! types this is implemented for [`BigRational`], which lets the exact
//! value-iteration oracle and the bound sandwich be checked without any
//! rounding tolerance.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating point: f32 or f64.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite literals, which never happens for f32/f64.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used for costs and value functions.
pub trait Cost: Clone + PartialOrd + Num + Debug + Send + Sync {
    /// Exact conversion for rationals, identity-ish for floats.
    fn from_f64_exact(x: f64) -> Self;
    fn to_f64_lossy(&self) -> f64;

    fn from_count(n: usize) -> Self {
        Self::from_f64_exact(n as f64)
    }

    /// Smaller of two values; the first wins on ties.
    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

impl Cost for f64 {
    fn from_f64_exact(x: f64) -> Self {
        x
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Cost for f32 {
    fn from_f64_exact(x: f64) -> Self {
        x as f32
    }
    fn to_f64_lossy(&self) -> f64 {
        *self as f64
    }
}

impl Cost for BigRational {
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_float(x).expect("finite cost")
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn from_count(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

/// Arithmetic mean of a non-empty slice in the cost field.
pub fn mean<T: Cost>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut n = 0usize;
    for v in values {
        sum = sum + v;
        n += 1;
    }
    assert!(n > 0, "mean of empty set");
    sum / T::from_count(n)
}
