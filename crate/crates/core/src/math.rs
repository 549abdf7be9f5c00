//! Scalar helpers backed by `libm` so results do not depend on the platform libm.

use core::f64::consts::PI;

pub use libm::{cos, exp, fabs, log, sin, sqrt};

/// Normalized cardinal sine, `sin(pi x) / (pi x)` with `sinc(0) = 1`.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        sin(px) / px
    }
}

#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg * (PI / 180.0)
}

/// `(sin x, cos x)`.
#[inline]
pub fn sincos(x: f64) -> (f64, f64) {
    libm::sincos(x)
}
