use serde::{Deserialize, Serialize};

use super::fft::{fftfreq, is_nyquist};
use crate::error::{config, Result};
use crate::model::MCParams;

/// Pixel and frame sampling of the physical field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Pixels per degree.
    pub ppd: f64,
    /// Frames per second.
    pub fps: f64,
    /// Recursion step in seconds; defaults to one frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Largest step `Δ/ν` for which the critically damped recursion is stable.
pub const MAX_STEP_RATIO: f64 = 2.0 * (std::f64::consts::SQRT_2 - 1.0);

impl GridSpec {
    pub fn new(nx: usize, ny: usize, ppd: f64, fps: f64) -> Self {
        Self {
            nx,
            ny,
            ppd,
            fps,
            delta: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 2 || !n.is_power_of_two() {
                return config(format!("{name} must be a power of two ≥ 2, got {n}"));
            }
        }
        if !(self.ppd > 0.0 && self.ppd.is_finite()) {
            return config(format!("ppd must be positive, got {}", self.ppd));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return config(format!("fps must be positive, got {}", self.fps));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return config(format!("delta must be positive, got {d}"));
            }
        }
        self.steps_per_frame().map(|_| ())
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(1.0 / self.fps)
    }

    /// Pixel pitch in degrees.
    pub fn dx(&self) -> f64 {
        1.0 / self.ppd
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn n_pixels(&self) -> usize {
        self.nx * self.ny
    }

    /// Recursion steps between emitted frames; the frame period must be an
    /// integer multiple of `delta`.
    pub fn steps_per_frame(&self) -> Result<usize> {
        let ratio = self.dt() / self.delta();
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
            return config(format!(
                "frame period 1/fps = {} s is not an integer multiple of delta = {} s",
                self.dt(),
                self.delta()
            ));
        }
        Ok(k as usize)
    }

    /// Spatial frequency in cycles/degree of bin `(iy, ix)`.
    pub fn xi(&self, iy: usize, ix: usize) -> [f64; 2] {
        [fftfreq(ix, self.nx) * self.ppd, fftfreq(iy, self.ny) * self.ppd]
    }

    /// Bins that carry signal: not DC and not on a Nyquist row or column.
    pub fn is_active(&self, iy: usize, ix: usize) -> bool {
        !(ix == 0 && iy == 0) && !is_nyquist(ix, self.nx) && !is_nyquist(iy, self.ny)
    }

    /// Largest retained spatial frequency radius.
    pub fn max_active_radius(&self) -> f64 {
        let fx = (self.nx / 2 - 1) as f64 / self.nx as f64 * self.ppd;
        let fy = (self.ny / 2 - 1) as f64 / self.ny as f64 * self.ppd;
        fx.hypot(fy)
    }

    /// Smallest retained spatial frequency radius.
    pub fn min_active_radius(&self) -> f64 {
        (self.ppd / self.nx as f64).min(self.ppd / self.ny as f64)
    }

    /// Largest stable recursion step for `params` on this grid.
    pub fn max_stable_delta(&self, params: &MCParams) -> f64 {
        let nu_min = 1.0 / (2.0 * std::f64::consts::PI * params.sigma_r * self.max_active_radius());
        MAX_STEP_RATIO * nu_min
    }

    /// Same grid with the coarsest `delta = 1/(fps·k)` that keeps `Δ/ν`
    /// below `margin · MAX_STEP_RATIO` on every bin.
    pub fn with_stable_delta(mut self, params: &MCParams, margin: f64) -> Self {
        let bound = margin * self.max_stable_delta(params);
        let k = (self.dt() / bound).ceil().max(1.0);
        self.delta = if k == 1.0 { None } else { Some(self.dt() / k) };
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(GridSpec::new(64, 32, 8.0, 100.0).validate().is_ok());
        assert!(GridSpec::new(48, 32, 8.0, 100.0).validate().is_err());
        assert!(GridSpec::new(64, 64, 0.0, 100.0).validate().is_err());
        assert!(GridSpec::new(64, 64, 8.0, 100.0).with_delta(0.003).validate().is_err());
        let g = GridSpec::new(64, 64, 8.0, 100.0).with_delta(0.0025);
        assert_eq!(g.steps_per_frame().unwrap(), 4);
    }

    #[test]
    fn bin_frequencies() {
        let g = GridSpec::new(8, 4, 16.0, 100.0);
        assert_eq!(g.xi(0, 1), [2.0, 0.0]);
        assert_eq!(g.xi(3, 0), [0.0, -4.0]);
        assert!(!g.is_active(0, 0) && !g.is_active(0, 4) && !g.is_active(2, 1));
        assert!(g.is_active(1, 3));
    }

    #[test]
    fn stable_delta_is_integer_fraction() {
        let p = MCParams::new([0.0; 2], 0.0, 0.3, 1.0, 0.5, 5.0).unwrap();
        let g = GridSpec::new(64, 64, 16.0, 100.0).with_stable_delta(&p, 0.9);
        assert!(g.delta() <= 0.9 * g.max_stable_delta(&p));
        assert!(g.validate().is_ok());
    }
}
