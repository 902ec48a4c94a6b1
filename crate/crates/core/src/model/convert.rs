//! Conversions between `(z0, σ_Z)` and the mode-based parametrizations.

use std::f64::consts::LN_2;

use crate::error::{domain, Result};

/// Recovers `(z0, σ_Z)` from the mode `m_z` and scale `d_z = z0 σ² (1 + σ²)`.
///
/// `σ_Z` is the unique positive root of `x²(1 + x²)² = d_z / m_z`, found by
/// bisection.
pub fn convert_mode_std(m_z: f64, d_z: f64) -> Result<(f64, f64)> {
    if !(m_z > 0.0) {
        return domain(format!("m_z must be positive, got {m_z}"));
    }
    if !(d_z >= 0.0) {
        return domain(format!("d_z must be non-negative, got {d_z}"));
    }
    if d_z == 0.0 {
        return Ok((m_z, 0.0));
    }
    let ratio = d_z / m_z;
    let p = |x: f64| {
        let x2 = x * x;
        x2 * (1.0 + x2) * (1.0 + x2) - ratio
    };
    let mut lo = 0.0;
    let mut hi = ratio.sqrt().max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    let sigma_z = 0.5 * (lo + hi);
    Ok((m_z * (1.0 + sigma_z * sigma_z), sigma_z))
}

/// Recovers `(z0, σ_Z)` from the mode and the octave bandwidth `b_z`.
pub fn convert_octave(m_z: f64, b_z: f64) -> Result<(f64, f64)> {
    if !(m_z > 0.0) {
        return domain(format!("m_z must be positive, got {m_z}"));
    }
    if !(b_z >= 0.0) {
        return domain(format!("b_z must be non-negative, got {b_z}"));
    }
    let sigma_z = ((LN_2 / 8.0 * b_z * b_z).exp() - 1.0).sqrt();
    Ok((m_z * (1.0 + sigma_z * sigma_z), sigma_z))
}
