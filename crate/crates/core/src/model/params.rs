use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::convert::{convert_mode_std, convert_octave};
use crate::error::{config, Error, Result};

/// Full Motion Cloud parameter set in physical units.
///
/// Speeds are in degrees/second, spatial frequencies in cycles/degree and
/// angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct MCParams {
    /// Central translation speed.
    pub v0: [f64; 2],
    /// Central orientation, normalized into `[-π, π)`.
    pub theta0: f64,
    /// Orientation dispersion.
    pub sigma_theta: f64,
    /// Central spatial frequency.
    pub z0: f64,
    /// Spatial frequency dispersion (dimensionless).
    pub sigma_z: f64,
    /// Speed dispersion.
    pub sigma_r: f64,
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        -PI
    } else {
        t
    }
}

impl MCParams {
    pub fn new(
        v0: [f64; 2],
        theta0: f64,
        sigma_theta: f64,
        z0: f64,
        sigma_z: f64,
        sigma_r: f64,
    ) -> Result<Self> {
        let p = Self {
            v0,
            theta0: wrap_angle(theta0),
            sigma_theta,
            z0,
            sigma_z,
            sigma_r,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters with the frequency envelope given by its mode and
    /// second-moment scale.
    pub fn from_mode_std(
        v0: [f64; 2],
        theta0: f64,
        sigma_theta: f64,
        m_z: f64,
        d_z: f64,
        sigma_r: f64,
    ) -> Result<Self> {
        let (z0, sigma_z) = convert_mode_std(m_z, d_z)?;
        Self::new(v0, theta0, sigma_theta, z0, sigma_z, sigma_r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.v0.iter().all(|v| v.is_finite())
            && [self.theta0, self.sigma_theta, self.z0, self.sigma_z, self.sigma_r]
                .iter()
                .all(|v| v.is_finite());
        if !finite {
            return config("motion cloud parameters must be finite");
        }
        if self.z0 <= 0.0 {
            return config(format!("z0 must be positive, got {}", self.z0));
        }
        for (name, v) in [
            ("sigma_theta", self.sigma_theta),
            ("sigma_z", self.sigma_z),
            ("sigma_r", self.sigma_r),
        ] {
            if v <= 0.0 {
                return config(format!("{name} must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn derived(&self) -> DerivedParams {
        DerivedParams::from(self)
    }

    pub fn with_speed(mut self, v0: [f64; 2]) -> Self {
        self.v0 = v0;
        self
    }
}

/// Serialized form accepted on load. The frequency envelope may be given as
/// `(z0, sigma_z)`, `(m_z, d_z)` or `(m_z, b_z)`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default)]
    v0: [f64; 2],
    theta0: f64,
    sigma_theta: f64,
    sigma_r: f64,
    z0: Option<f64>,
    sigma_z: Option<f64>,
    m_z: Option<f64>,
    d_z: Option<f64>,
    b_z: Option<f64>,
}

impl TryFrom<RawParams> for MCParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let direct = raw.z0.is_some() || raw.sigma_z.is_some();
        let alternate = raw.m_z.is_some() || raw.d_z.is_some() || raw.b_z.is_some();
        let (z0, sigma_z) = match (direct, alternate) {
            (true, true) => {
                return config("z0/sigma_z and m_z/d_z/b_z are mutually exclusive");
            }
            (true, false) => match (raw.z0, raw.sigma_z) {
                (Some(z0), Some(s)) => (z0, s),
                _ => return config("both z0 and sigma_z are required"),
            },
            (false, true) => match (raw.m_z, raw.d_z, raw.b_z) {
                (Some(m), Some(d), None) => convert_mode_std(m, d)?,
                (Some(m), None, Some(b)) => convert_octave(m, b)?,
                _ => return config("give m_z together with exactly one of d_z or b_z"),
            },
            (false, false) => return config("missing spatial frequency envelope (z0, sigma_z)"),
        };
        MCParams::new(raw.v0, raw.theta0, raw.sigma_theta, z0, sigma_z, raw.sigma_r)
    }
}

/// Spatial frequency in cycles/degree and temporal frequency in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqPoint {
    pub xi: [f64; 2],
    pub tau: f64,
}

impl FreqPoint {
    pub fn new(xi: [f64; 2], tau: f64) -> Self {
        Self { xi, tau }
    }

    pub fn from_polar(radius: f64, angle: f64, tau: f64) -> Self {
        Self {
            xi: [radius * angle.cos(), radius * angle.sin()],
            tau,
        }
    }

    pub fn radius(&self) -> f64 {
        self.xi[0].hypot(self.xi[1])
    }

    pub fn angle(&self) -> f64 {
        self.xi[1].atan2(self.xi[0])
    }
}

/// Remarkable values of the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Mode of the radial frequency density.
    pub m_z: f64,
    /// Second-moment scale `z0 σ² (1 + σ²)`.
    pub d_z: f64,
    /// Octave bandwidth.
    pub b_z: f64,
    /// Temporal scale `1 / (σ_R z0)`.
    pub t_star: f64,
}

impl From<&MCParams> for DerivedParams {
    fn from(p: &MCParams) -> Self {
        let s2 = p.sigma_z * p.sigma_z;
        Self {
            m_z: p.z0 / (1.0 + s2),
            d_z: p.z0 * s2 * (1.0 + s2),
            b_z: (8.0 * (1.0 + s2).ln() / std::f64::consts::LN_2).sqrt(),
            t_star: 1.0 / (p.sigma_r * p.z0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn json(body: &str) -> Result<MCParams> {
        serde_json::from_str::<MCParams>(body).map_err(Error::from)
    }

    #[test]
    fn theta_is_wrapped() {
        let p = MCParams::new([0.0; 2], 3.0 * PI / 2.0, 0.2, 1.0, 0.5, 1.0).unwrap();
        assert!((p.theta0 + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(PI), -PI);
    }

    #[test]
    fn rejects_non_positive_dispersions() {
        assert!(MCParams::new([0.0; 2], 0.0, 0.0, 1.0, 0.5, 1.0).is_err());
        assert!(MCParams::new([0.0; 2], 0.0, 0.1, -1.0, 0.5, 1.0).is_err());
        assert!(MCParams::new([0.0; 2], 0.0, 0.1, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn json_direct_and_converted_forms() {
        let p = json(r#"{"v0":[1,0],"theta0":0,"sigma_theta":0.2,"z0":2,"sigma_z":0.5,"sigma_r":1}"#)
            .unwrap();
        assert_eq!(p.z0, 2.0);
        let back: MCParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);

        let q = json(r#"{"theta0":0,"sigma_theta":0.2,"m_z":1,"d_z":1,"sigma_r":1}"#).unwrap();
        assert!((q.derived().m_z - 1.0).abs() < 1e-10);
        assert!((q.derived().d_z - 1.0).abs() < 1e-10);

        let r = json(r#"{"theta0":0,"sigma_theta":0.2,"m_z":1,"b_z":2.8284271247461903,"sigma_r":1}"#)
            .unwrap();
        assert!((r.sigma_z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_rejects_mixed_blocks() {
        let err = json(r#"{"theta0":0,"sigma_theta":0.2,"z0":2,"sigma_z":0.5,"m_z":1,"d_z":1,"sigma_r":1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("mutually exclusive"), "{err}");
        assert!(json(r#"{"theta0":0,"sigma_theta":0.2,"m_z":1,"d_z":1,"b_z":1,"sigma_r":1}"#).is_err());
    }
}
