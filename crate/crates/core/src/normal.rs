//! Standard normal helpers shared by the copula and bandwidth code.

use statrs::function::erf::{erfc, erfc_inv};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn ln_pdf(x: f64) -> f64 {
    INV_SQRT_2PI.ln() - 0.5 * x * x
}

/// Lower tail probability, accurate deep into both tails.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail probability `1 - cdf(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse of [`cdf`]. Callers guarantee `0 < p < 1`.
pub fn quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "quantile({p})");
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse of [`sf`]; keeps precision for `q` close to zero.
pub fn isf(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}
