//! Hurst exponent and the Mandelbrot–Van Ness normalization constant.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, Result};

/// Hurst exponent `H ∈ (1/2, 1)` together with the normalization constant
///
/// ```text
/// c_H = sqrt( 2H Γ(3/2 − H) / (Γ(1/2 + H) Γ(2 − 2H)) )
/// ```
///
/// which makes `Var B_H(1) = 1` for the moving-average representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstParams {
    h: f64,
    c_h: f64,
}

impl HurstParams {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.5 && h < 1.0) {
            return domain(format!("Hurst exponent must lie in (0.5, 1), got {h}"));
        }
        let c_h = normalization_constant(h);
        if !(c_h.is_finite() && c_h > 0.0) {
            return domain(format!("normalization constant is not positive at H = {h}"));
        }
        Ok(Self { h, c_h })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    /// `H − 1/2`, the exponent of the noise kernel `(t − q)^{H−1/2}`.
    #[inline]
    pub fn alpha(&self) -> f64 {
        self.h - 0.5
    }
}

/// Alias matching the operation name used throughout the CLI and docs.
pub fn make_hurst_params(h: f64) -> Result<HurstParams> {
    HurstParams::new(h)
}

fn normalization_constant(h: f64) -> f64 {
    let num = 2.0 * h * gamma(1.5 - h);
    let den = gamma(0.5 + h) * gamma(2.0 - 2.0 * h);
    (num / den).sqrt()
}
