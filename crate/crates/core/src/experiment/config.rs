use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// The 2AFC protocol: a reference `(u★, z★)`, offset grids for speed and
/// frequency, and fixed envelope parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Reference spatial frequency (mode), c/°.
    pub z_star: f64,
    /// Reference speed, °/s.
    pub u_star: f64,
    /// Temporal scale, s; sets `σ_R = 1/(t★ z₀)` per stimulus.
    pub t_star: f64,
    pub delta_u: Vec<f64>,
    pub delta_z: Vec<f64>,
    pub reps_per_cell: usize,
    pub theta0: f64,
    pub sigma_theta: f64,
    /// Second-moment scale of the frequency envelope, c/°.
    pub d_z: f64,
    pub stimulus_ms: f64,
    pub isi_ms: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            z_star: 1.28,
            u_star: 5.0,
            t_star: 0.1,
            delta_u: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            delta_z: vec![-0.48, -0.21, 0.0, 0.32, 0.85],
            reps_per_cell: 10,
            theta0: PI / 2.0,
            sigma_theta: PI / 12.0,
            d_z: 1.0,
            stimulus_ms: 250.0,
            isi_ms: 250.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("z_star", self.z_star),
            ("u_star", self.u_star),
            ("t_star", self.t_star),
            ("sigma_theta", self.sigma_theta),
            ("d_z", self.d_z),
            ("stimulus_ms", self.stimulus_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return config(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.isi_ms >= 0.0) {
            return config(format!("isi_ms must be non-negative, got {}", self.isi_ms));
        }
        if self.delta_u.is_empty() || self.delta_z.is_empty() {
            return config("offset lists must not be empty");
        }
        if self.reps_per_cell == 0 {
            return config("reps_per_cell must be at least 1");
        }
        for du in &self.delta_u {
            if !(self.u_star + du > 0.0) {
                return config(format!("speed offset {du} makes u = {} non-positive", self.u_star + du));
            }
        }
        for dz in &self.delta_z {
            if !(self.z_star + dz > 0.0) {
                return config(format!("frequency offset {dz} makes z = {} non-positive", self.z_star + dz));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.delta_u.len() * self.delta_z.len()
    }

    pub fn n_trials(&self) -> usize {
        self.n_cells() * self.reps_per_cell
    }
}
