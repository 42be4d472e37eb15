//! Scalar float functions routed through `libm` so results do not depend on
//! the platform math library.

pub use libm::{cos, exp, log, log10, log2, pow, sin, sqrt, tanh};

pub const PI: f64 = core::f64::consts::PI;

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    pow(10.0, db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * log10(x)
}

/// Fractional part `x - floor(x)`, used to reduce large phase arguments
/// (in cycles) before scaling by 2π.
#[inline]
pub fn fmod_unit(x: f64) -> f64 {
    x - libm::floor(x)
}
