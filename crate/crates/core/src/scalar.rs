//! Scalar abstraction for the numeric kernels.
//!
//! Everything numerical in this crate is generic over [`Real`], a small
//! extension of [`num_traits::Float`] adding the log-gamma function and
//! lossless conversion to and from `f64`. `f64` is the working type used by
//! the crate-root aliases; `f32` is supported for memory-bound callers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the model, sampler, and diagnostics.
pub trait Real:
    Float + FromPrimitive + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Natural log of the gamma function.
    fn ln_gamma(self) -> Self;

    /// Conversion from `f64`, infallible for float scalars.
    fn of(v: f64) -> Self;

    /// Widening (or identity) conversion to `f64`.
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self)
    }

    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self as f64) as f32
    }

    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// logit(x) = log(x / (1 - x)), finite only on the open unit interval.
pub fn logit<F: Real>(x: F) -> F {
    (x / (F::one() - x)).ln()
}

/// Inverse logit, numerically stable on both tails.
pub fn sigmoid<F: Real>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}
