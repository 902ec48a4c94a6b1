//! Per-frequency coefficients of the critically damped recursion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::density::MotionCloud;
use super::ltransform::h;
use super::params::MCParams;
use crate::error::{domain, Result};

/// Coefficients of `ν² Ï + 2ν İ + I = noise` at one spatial frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdeCoeffs {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub sigma_w_hat: f64,
    /// Relaxation time in seconds.
    pub nu_hat: f64,
}

impl SpdeCoeffs {
    /// Power spectrum in τ (Hz) of the stationary continuous-time solution.
    pub fn temporal_spectrum(&self, tau: f64) -> f64 {
        let nu = self.nu_hat;
        self.sigma_w_hat * self.sigma_w_hat * nu.powi(4) * h(2.0 * PI * nu * tau)
    }

    /// All-zero driving, used for the DC bin.
    pub fn silent(nu_hat: f64) -> Self {
        Self {
            alpha_hat: 2.0 / nu_hat,
            beta_hat: 1.0 / (nu_hat * nu_hat),
            sigma_w_hat: 0.0,
            nu_hat,
        }
    }
}

impl MotionCloud {
    pub fn spde_coeffs(&self, xi: [f64; 2]) -> Result<SpdeCoeffs> {
        let z = xi[0].hypot(xi[1]);
        if !(z > 0.0) || !z.is_finite() {
            return domain("spde coefficients are undefined at the zero frequency");
        }
        // Frequencies are ordinary (cycles), hence the 2π in the rate.
        let nu = 1.0 / (2.0 * PI * self.params().sigma_r * z);
        let var = self.spatial_envelope(xi) / nu.powi(4);
        Ok(SpdeCoeffs {
            alpha_hat: 2.0 / nu,
            beta_hat: 1.0 / (nu * nu),
            sigma_w_hat: var.sqrt(),
            nu_hat: nu,
        })
    }
}

pub fn spde_coeffs(xi: [f64; 2], params: &MCParams) -> Result<SpdeCoeffs> {
    MotionCloud::new(*params).spde_coeffs(xi)
}
