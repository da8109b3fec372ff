//! Float math shims. With `std` these forward to the intrinsics; without it
//! they fall back to `libm` so the crate stays `no_std`-compatible.

#![allow(dead_code)]

macro_rules! shim {
    ($name:ident, $std_method:ident, $libm_fn:path) => {
        #[cfg(feature = "std")]
        #[inline]
        pub(crate) fn $name(x: f64) -> f64 {
            x.$std_method()
        }
        #[cfg(not(feature = "std"))]
        #[inline]
        pub(crate) fn $name(x: f64) -> f64 {
            $libm_fn(x)
        }
    };
}

shim!(exp, exp, libm::exp);
shim!(ln, ln, libm::log);
shim!(sqrt, sqrt, libm::sqrt);
shim!(sin, sin, libm::sin);
shim!(cos, cos, libm::cos);
shim!(floor, floor, libm::floor);
shim!(ceil, ceil, libm::ceil);
shim!(abs, abs, libm::fabs);

/// Rounds half away from zero, like `f64::round`.
#[cfg(feature = "std")]
#[inline]
pub(crate) fn round(x: f64) -> f64 {
    x.round()
}
#[cfg(not(feature = "std"))]
#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// `x^n` for small non-negative integer exponents.
#[inline]
pub(crate) fn powi(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    let mut base = x;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}
