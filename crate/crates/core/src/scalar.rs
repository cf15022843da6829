//! Scalar abstraction shared by the numeric modules.
//!
//! Probability vectors, rasters, model parameters and the statistics kernels
//! are generic over [`Scalar`], which is implemented for `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Allowed deviation of a probability vector's sum from one.
    const SIMPLEX_TOL: f64;

    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const SIMPLEX_TOL: f64 = 1e-5;
}

impl Scalar for f64 {
    const SIMPLEX_TOL: f64 = 1e-9;
}
