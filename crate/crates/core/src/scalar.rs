//! Floating point abstraction for the closed-form parts of the model.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real scalar usable by the static model: `f32` or `f64`.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Absolute tolerance for identities that hold exactly in exact arithmetic.
    fn identity_tol() -> Self;
}

impl Real for f32 {
    fn identity_tol() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn identity_tol() -> Self {
        1e-12
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in T")
}

/// Reduces an angle into `[0, 2π)`.
pub fn reduce_angle<T: Real>(a: T) -> T {
    let two_pi = T::TAU();
    let r = a % two_pi;
    let r = if r < T::zero() { r + two_pi } else { r };
    // `r + 2π` can round up to exactly 2π for tiny negative inputs.
    if r >= two_pi {
        T::zero()
    } else {
        r
    }
}

/// Maps a phase onto the half-open interval `(-2π, 0]`.
pub fn wrap_nonpositive<T: Real>(g: T) -> T {
    let two_pi = T::TAU();
    let r = g % two_pi;
    if r > T::zero() {
        r - two_pi
    } else if r <= -two_pi {
        T::zero()
    } else {
        r
    }
}

/// Distance between two angles modulo 2π, in `[0, π]`.
pub fn angular_distance<T: Real>(a: T, b: T) -> T {
    let d = reduce_angle(a - b);
    d.min(T::TAU() - d)
}
