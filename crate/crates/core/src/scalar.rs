//! Scalar abstraction for the analytic parts of the crate.
//!
//! The closed-form link model, the decoy-state bounds and the coupling
//! arithmetic are written against [`Real`] so they can be evaluated in
//! `f32` for quick sweeps or `f64` (the default aliases at the crate root).
//! Monte Carlo code works in `f64` only.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the analytic modules.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {}

/// Converts an `f64` literal or configuration value into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 value representable in scalar type")
}

/// Converts back to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
