//! Floating-point abstraction: every kernel in this crate is generic over
//! the scalar type, instantiated as `f64` by the CLI and most tests.

use num_traits::{Float, FloatConst, NumAssign, ToPrimitive};
use rustfft::FftNum;
use std::fmt::{Display, LowerExp};
use std::iter::Sum;

/// Scalar type usable for both physical samples and spectral coefficients.
///
/// `FftNum` brings everything the transform backend needs; the remaining
/// bounds cover elementary functions, constants and accumulation.
pub trait Real:
    FftNum + Float + FloatConst + NumAssign + ToPrimitive + Sum + Display + LowerExp
{
}

impl<T> Real for T where
    T: FftNum + Float + FloatConst + NumAssign + ToPrimitive + Sum + Display + LowerExp
{
}

/// Shorthand conversion from an `f64` literal (exact for `f64` itself).
#[inline]
pub fn r64<R: Real>(v: f64) -> R {
    R::from_f64(v).expect("scalar type must represent f64 literals")
}

/// Lossy view of a generic scalar as `f64`, for error messages and I/O.
#[inline]
pub fn as_f64<R: Real>(v: R) -> f64 {
    v.to_f64().expect("scalar type must convert to f64")
}
