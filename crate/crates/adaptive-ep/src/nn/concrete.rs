//! Concrete relaxation of a dropout keep-mask.
//!
//! Instead of a hard Bernoulli mask, the mask is a smooth function of the drop
//! probability `p`, a uniform sample `u`, and a temperature. This keeps the
//! mask differentiable in `p`, so the drop probability itself can be learned
//! by gradient descent, and fresh mask samples at decision time double as
//! Thompson-style exploration noise.

use crate::error::{Error, Result};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Keeps masks strictly inside (0,1) even where the sigmoid saturates in
/// floating point.
pub(crate) const MASK_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn concrete_mask_unchecked(p: f64, u: f64, temperature: f64) -> f64 {
    (1.0 - sigmoid((logit(p) + logit(u)) / temperature)).clamp(MASK_EPS, 1.0 - MASK_EPS)
}

/// Smooth keep-mask value in `(0, 1)`.
///
/// `z = 1 - sigmoid((log p - log(1-p) + log u - log(1-u)) / temperature)`
///
/// As the temperature goes to zero this approaches a hard Bernoulli(1-p)
/// keep-mask; the expectation of `z` is approximately `1 - p`.
pub fn concrete_mask(p: f64, u: f64, temperature: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Validation(format!(
            "dropout probability must be in (0,1), got {p}"
        )));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Validation(format!(
            "uniform sample must be in (0,1), got {u}"
        )));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Validation(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(concrete_mask_unchecked(p, u, temperature))
}

/// Derivative of the mask with respect to the dropout logit (`logit(p)`),
/// holding the noise `u` fixed. Collapses to `-z(1-z)/temperature`.
#[inline]
pub(crate) fn mask_grad_wrt_logit(mask: f64, temperature: f64) -> f64 {
    -mask * (1.0 - mask) / temperature
}
