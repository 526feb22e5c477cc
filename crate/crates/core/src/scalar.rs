//! Scalar abstraction over the floating-point element types.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! code runs in double precision (the default, used by all oracles and
//! gradient checks) and in single precision (a training-speed option).

use std::fmt;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Element type of tensors, membrane potentials and transform buffers.
///
/// `num_traits::Float` brings in `NumCast`, so `S::from(x).unwrap()` converts
/// from `f64` constants and `x.to_f64().unwrap()` goes the other way.
pub trait Scalar:
    num_traits::Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Short name used in reports and container headers.
    const NAME: &'static str;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Convert an `f64` constant into the active scalar type.
#[inline]
pub fn cast<S: Scalar>(v: f64) -> S {
    S::from(v).expect("constant representable in scalar type")
}
