//! Finite-intensity shot noise: a Poisson number of drifting gratings,
//! scaled by `1/√λ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};

use super::grid::GridSpec;
use super::stack::FrameStack;
use crate::error::{config, Result};
use crate::model::{linv_h, MCParams, SpeedProfile};
use crate::quad::{integrate, QuadOptions};

/// Samples `ψ` with density `∝ exp(κ cos ψ)` on `(−π, π]` (Best & Fisher).
pub fn sample_von_mises<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return rng.gen_range(-PI..PI);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u3: f64 = rng.gen();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let psi = f.clamp(-1.0, 1.0).acos();
            return if u3 < 0.5 { -psi } else { psi };
        }
    }
}

/// Draws speed radii from `f_R`.
#[derive(Debug, Clone)]
pub struct SpeedSampler {
    profile: SpeedProfile,
    sigma: f64,
    // (u, F(u)) for the unit-scale critically damped profile.
    table: Vec<(f64, f64)>,
}

impl SpeedSampler {
    pub fn new(sigma_r: f64, profile: SpeedProfile) -> Result<Self> {
        let table = match profile {
            SpeedProfile::Gaussian => Vec::new(),
            SpeedProfile::SpdeExact => cdf_table()?,
        };
        Ok(Self {
            profile,
            sigma: sigma_r,
            table,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.profile {
            SpeedProfile::Gaussian => {
                let n: f64 = rng.sample(rand_distr::StandardNormal);
                self.sigma * n.abs()
            }
            SpeedProfile::SpdeExact => {
                let p: f64 = rng.gen();
                let i = self.table.partition_point(|&(_, c)| c < p).clamp(1, self.table.len() - 1);
                let (u0, c0) = self.table[i - 1];
                let (u1, c1) = self.table[i];
                let w = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
                self.sigma * (u0 + w * (u1 - u0))
            }
        }
    }
}

fn cdf_table() -> Result<Vec<(f64, f64)>> {
    let mut knots: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
    knots.extend((1..=400).map(|i| 20.0 * (1e3f64 / 20.0).powf(i as f64 / 400.0)));
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_intervals: 200,
    };
    let mut table = Vec::with_capacity(knots.len());
    let mut acc = 0.0;
    table.push((0.0, 0.0));
    for w in knots.windows(2) {
        acc += integrate(linv_h, w[0], w[1], opts)?;
        table.push((w[1], acc));
    }
    // Truncate at the last knot; the discarded tail mass is below 1e-9.
    let total = acc;
    for e in &mut table {
        e.1 /= total;
    }
    Ok(table)
}

pub fn shot_noise_sample(
    params: &MCParams,
    grid: &GridSpec,
    lambda: f64,
    n_frames: usize,
    seed: u64,
) -> Result<FrameStack> {
    shot_noise_with(params, grid, lambda, n_frames, seed, SpeedProfile::SpdeExact)
}

/// One realization: `N ~ Poisson(λ)` gratings `cos(2π z⟨e_θ, x − V t⟩ + ϕ)`
/// summed and scaled by `1/√λ`. With unbounded gratings the texton position
/// only shifts the phase, so it is folded into the uniform `ϕ`.
pub fn shot_noise_with(
    params: &MCParams,
    grid: &GridSpec,
    lambda: f64,
    n_frames: usize,
    seed: u64,
    profile: SpeedProfile,
) -> Result<FrameStack> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return config(format!("shot-noise intensity must be positive, got {lambda}"));
    }
    if n_frames == 0 {
        return config("n_frames must be at least 1");
    }
    params.validate()?;
    grid.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speeds = SpeedSampler::new(params.sigma_r, profile)?;
    let log_sd = (1.0 + params.sigma_z * params.sigma_z).ln().sqrt();
    let freq = LogNormal::new(params.z0.ln(), log_sd).expect("validated parameters");
    let kappa = 1.0 / (4.0 * params.sigma_theta * params.sigma_theta);
    let count = Poisson::new(lambda).expect("positive intensity").sample(&mut rng) as usize;

    let (nx, ny) = (grid.nx, grid.ny);
    let dx = grid.dx();
    let mut data = vec![0.0; n_frames * nx * ny];
    let mut row = vec![Complex64::default(); nx];
    let mut col = vec![Complex64::default(); ny];
    for _ in 0..count {
        let z = freq.sample(&mut rng);
        let mut theta = params.theta0 + 0.5 * sample_von_mises(kappa, &mut rng);
        if rng.gen::<bool>() {
            theta += PI;
        }
        let r = speeds.sample(&mut rng);
        let phi: f64 = rng.gen_range(0.0..2.0 * PI);
        let heading: f64 = rng.gen_range(0.0..2.0 * PI);
        let v = [
            params.v0[0] + r * heading.cos(),
            params.v0[1] + r * heading.sin(),
        ];
        let k = [z * theta.cos(), z * theta.sin()];
        for (ix, c) in row.iter_mut().enumerate() {
            *c = Complex64::from_polar(1.0, 2.0 * PI * k[0] * ix as f64 * dx);
        }
        for (iy, c) in col.iter_mut().enumerate() {
            *c = Complex64::from_polar(1.0, 2.0 * PI * k[1] * iy as f64 * dx);
        }
        let drift = 2.0 * PI * (k[0] * v[0] + k[1] * v[1]);
        for t in 0..n_frames {
            let phase = Complex64::from_polar(1.0, phi - drift * t as f64 / grid.fps);
            let frame = &mut data[t * nx * ny..(t + 1) * nx * ny];
            for (iy, c) in col.iter().enumerate() {
                let cy = phase * c;
                let line = &mut frame[iy * nx..(iy + 1) * nx];
                for (px, rx) in line.iter_mut().zip(&row) {
                    *px += (cy * rx).re;
                }
            }
        }
    }
    let scale = 1.0 / lambda.sqrt();
    for v in &mut data {
        *v *= scale;
    }
    Ok(FrameStack {
        grid: *grid,
        params: *params,
        seed,
        n_frames,
        sigma_i: 0.5f64.sqrt(),
        data,
    })
}
