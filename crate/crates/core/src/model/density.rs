use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ltransform::{h, l_half_normal, linv_h};
use super::params::{FreqPoint, MCParams};
use crate::error::{domain, Result};
use crate::special::bessel_i0e;

/// Shape of the radial speed density `f_R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedProfile {
    /// Half-normal speeds; static-in-time decorrelation.
    Gaussian,
    /// Critically damped profile whose spectrum is `h`; the one the
    /// recursive synthesizer realizes.
    #[default]
    SpdeExact,
}

/// A parameter set with its normalizing constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct MotionCloud {
    params: MCParams,
    log_var: f64,
    kappa: f64,
    theta_norm: f64,
}

impl MotionCloud {
    pub fn new(params: MCParams) -> Self {
        let log_var = (1.0 + params.sigma_z * params.sigma_z).ln();
        let kappa = 1.0 / (4.0 * params.sigma_theta * params.sigma_theta);
        Self {
            params,
            log_var,
            kappa,
            theta_norm: 1.0 / (PI * bessel_i0e(kappa)),
        }
    }

    pub fn params(&self) -> &MCParams {
        &self.params
    }

    /// Log-normal radial frequency density.
    pub fn f_z(&self, z: f64) -> f64 {
        if !(z > 0.0) || !z.is_finite() {
            return 0.0;
        }
        let l = (z / self.params.z0).ln();
        (-l * l / (2.0 * self.log_var)).exp() / (z * (2.0 * PI * self.log_var).sqrt())
    }

    /// π-periodic von Mises orientation density, normalized over one period.
    pub fn f_theta(&self, theta: f64) -> f64 {
        let c = (2.0 * (theta - self.params.theta0)).cos();
        (self.kappa * (c - 1.0)).exp() * self.theta_norm
    }

    /// Radial speed density, normalized on `[0, ∞)`.
    pub fn f_r(&self, r: f64, profile: SpeedProfile) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        let s = self.params.sigma_r;
        match profile {
            SpeedProfile::Gaussian => {
                2.0 / (s * (2.0 * PI).sqrt()) * (-r * r / (2.0 * s * s)).exp()
            }
            SpeedProfile::SpdeExact => linv_h(r / s) / (s * PI / 4.0),
        }
    }

    /// Static spatial envelope `f_Z(‖ξ‖) f_Θ(∠ξ) / ‖ξ‖²`.
    pub fn spatial_envelope(&self, xi: [f64; 2]) -> f64 {
        let z = xi[0].hypot(xi[1]);
        if z == 0.0 {
            return 0.0;
        }
        self.f_z(z) * self.f_theta(xi[1].atan2(xi[0])) / (z * z)
    }

    /// Spectral power density at `(ξ, τ)`.
    pub fn power_spectrum(&self, p: &FreqPoint, profile: SpeedProfile) -> f64 {
        let z = p.radius();
        if z == 0.0 {
            return 0.0;
        }
        let env = self.spatial_envelope(p.xi);
        if env == 0.0 {
            return 0.0;
        }
        let v = self.params.v0;
        let u = -(p.tau + v[0] * p.xi[0] + v[1] * p.xi[1]) / z;
        match profile {
            SpeedProfile::Gaussian => env * l_half_normal(self.params.sigma_r, u),
            SpeedProfile::SpdeExact => env * h(u / self.params.sigma_r),
        }
    }
}

/// Convenience wrapper building a [`MotionCloud`] for a single evaluation.
pub fn mc_power_spectrum(p: &FreqPoint, params: &MCParams, profile: SpeedProfile) -> f64 {
    MotionCloud::new(*params).power_spectrum(p, profile)
}

/// Checked radial frequency density; `z` must be positive.
pub fn eval_fz(z: f64, params: &MCParams) -> Result<f64> {
    if !(z > 0.0) {
        return domain(format!("spatial frequency must be positive, got {z}"));
    }
    Ok(MotionCloud::new(*params).f_z(z))
}

pub fn eval_ftheta(theta: f64, params: &MCParams) -> f64 {
    MotionCloud::new(*params).f_theta(theta)
}

/// Checked radial speed density; `r` must be non-negative.
pub fn eval_fr(r: f64, params: &MCParams, profile: SpeedProfile) -> Result<f64> {
    if !(r >= 0.0) {
        return domain(format!("speed radius must be non-negative, got {r}"));
    }
    Ok(MotionCloud::new(*params).f_r(r, profile))
}
