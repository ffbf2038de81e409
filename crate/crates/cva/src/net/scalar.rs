//! Floating-point abstraction: the network runs in single precision for
//! production and in double precision for finite-difference gradient
//! checks.

use num_traits::Float;

/// Element type of network tensors and parameters.
pub trait Scalar:
    Float + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_double(v: f64) -> Self;
    fn to_double(self) -> f64;
    fn from_single(v: f32) -> Self;
    fn to_single(self) -> f32;
}

impl Scalar for f32 {
    fn from_double(v: f64) -> Self {
        v as f32
    }
    fn to_double(self) -> f64 {
        self as f64
    }
    fn from_single(v: f32) -> Self {
        v
    }
    fn to_single(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_double(v: f64) -> Self {
        v
    }
    fn to_double(self) -> f64 {
        self
    }
    fn from_single(v: f32) -> Self {
        v as f64
    }
    fn to_single(self) -> f32 {
        self as f32
    }
}
