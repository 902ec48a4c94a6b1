use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::model::MCParams;

/// Display mapping `u8 = clamp(round(offset + gain · I / σ_I))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub offset: f64,
    pub gain: f64,
    pub sigma_i: f64,
}

impl Quantization {
    pub fn new(sigma_i: f64) -> Self {
        Self {
            offset: 128.0,
            gain: 48.0,
            sigma_i,
        }
    }

    /// Quantizes the single-precision value so raw and image outputs agree.
    pub fn apply(&self, v: f32) -> u8 {
        if !(self.sigma_i > 0.0) {
            return self.offset as u8;
        }
        (self.offset + self.gain * f64::from(v) / self.sigma_i)
            .round()
            .clamp(0.0, 255.0) as u8
    }
}

/// `n_frames × ny × nx` luminance samples, frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub grid: GridSpec,
    pub params: MCParams,
    pub seed: u64,
    pub n_frames: usize,
    /// Stationary pixel standard deviation of the generating process.
    pub sigma_i: f64,
    pub data: Vec<f64>,
}

impl FrameStack {
    pub fn width(&self) -> usize {
        self.grid.nx
    }

    pub fn height(&self) -> usize {
        self.grid.ny
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.grid.n_pixels();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.n_pixels())
    }

    pub fn quantization(&self) -> Quantization {
        Quantization::new(self.sigma_i)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn quantized(&self) -> Vec<u8> {
        let q = self.quantization();
        self.data.iter().map(|&v| q.apply(v as f32)).collect()
    }
}
