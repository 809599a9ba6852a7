//! Finite-difference step policy shared by every derivative of the Lagrangian.

use crate::linalg::CMat;

/// First-derivative step `1e-5 (1 + |psi|)`.
pub fn step1(psi_norm: f64) -> f64 {
    1e-5 * (1.0 + psi_norm)
}

/// Outer step for nested (second) differences.
pub fn step2(psi_norm: f64) -> f64 {
    1e-4 * (1.0 + psi_norm)
}

/// Parameter increment that moves `psi` by `h` in Frobenius norm along `dir`.
pub fn tau_for(dir: &CMat, h: f64) -> f64 {
    let nrm = dir.norm();
    if nrm > 0.0 {
        h / nrm
    } else {
        h
    }
}

/// Central difference `(f(t) - f(-t)) / 2t`.
pub fn central<F: FnMut(f64) -> f64>(mut f: F, t: f64) -> f64 {
    (f(t) - f(-t)) / (2.0 * t)
}

/// Five-point central difference `[8 (f(t) - f(-t)) - (f(2t) - f(-2t))] / 12t`.
pub fn central4<F: FnMut(f64) -> f64>(mut f: F, t: f64) -> f64 {
    (8.0 * (f(t) - f(-t)) - (f(2.0 * t) - f(-2.0 * t))) / (12.0 * t)
}

/// Mixed second difference `[f(a,b) - f(a,-b) - f(-a,b) + f(-a,-b)] / 4ab`.
pub fn mixed<F: FnMut(f64, f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    (f(a, b) - f(a, -b) - f(-a, b) + f(-a, -b)) / (4.0 * a * b)
}

/// Pure second difference `[f(t) - 2 f(0) + f(-t)] / t^2`.
pub fn second<F: FnMut(f64) -> f64>(mut f: F, t: f64) -> f64 {
    (f(t) - 2.0 * f(0.0) + f(-t)) / (t * t)
}
