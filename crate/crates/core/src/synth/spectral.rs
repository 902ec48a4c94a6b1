//! Reference synthesis by filtering 3-D white noise with the analytic
//! spectrum. Periodic in time by construction.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::fft::{fftfreq, is_nyquist, FftNd};
use super::grid::GridSpec;
use super::stack::FrameStack;
use crate::error::{config, Error, Result};
use crate::model::{FreqPoint, MCParams, MotionCloud, SpeedProfile};

/// Analytic spectrum sampled on the `nt × ny × nx` DFT grid. Bins excluded
/// from synthesis (spatial DC, any Nyquist plane) are zero.
pub fn analytic_spectrum(
    params: &MCParams,
    grid: &GridSpec,
    nt: usize,
    profile: SpeedProfile,
) -> Vec<f64> {
    let cloud = MotionCloud::new(*params);
    let mut out = vec![0.0; nt * grid.n_pixels()];
    for it in 0..nt {
        if is_nyquist(it, nt) {
            continue;
        }
        let tau = fftfreq(it, nt) * grid.fps;
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                if !grid.is_active(iy, ix) {
                    continue;
                }
                let p = FreqPoint::new(grid.xi(iy, ix), tau);
                out[(it * grid.ny + iy) * grid.nx + ix] = cloud.power_spectrum(&p, profile);
            }
        }
    }
    out
}

pub fn synth_spectral(params: &MCParams, grid: &GridSpec, n_frames: usize, seed: u64) -> Result<FrameStack> {
    synth_spectral_with(params, grid, n_frames, seed, SpeedProfile::SpdeExact)
}

pub fn synth_spectral_with(
    params: &MCParams,
    grid: &GridSpec,
    n_frames: usize,
    seed: u64,
    profile: SpeedProfile,
) -> Result<FrameStack> {
    if n_frames == 0 {
        return config("n_frames must be at least 1");
    }
    params.validate()?;
    grid.validate()?;
    let gamma = analytic_spectrum(params, grid, n_frames, profile);
    let cell = grid.dx() * grid.dx() * grid.dt();
    let filter: Vec<f64> = gamma.iter().map(|g| (g / cell).sqrt()).collect();
    filter_white_noise(params, grid, n_frames, seed, &filter)
}

/// Shapes unit real white noise by a per-bin amplitude that must be
/// symmetric under `k → −k`.
pub(crate) fn filter_white_noise(
    params: &MCParams,
    grid: &GridSpec,
    n_frames: usize,
    seed: u64,
    filter: &[f64],
) -> Result<FrameStack> {
    let total = filter.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex64> = (0..total)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut fft = FftNd::new(&[n_frames, grid.ny, grid.nx]);
    fft.forward(&mut buf);
    for (b, f) in buf.iter_mut().zip(filter) {
        *b *= *f;
    }
    fft.inverse(&mut buf);
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for c in &buf {
        max_re = max_re.max(c.re.abs());
        max_im = max_im.max(c.im.abs());
    }
    if !(max_re.is_finite() && max_im.is_finite()) || max_im > 1e-8 * max_re.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "spectral synthesis lost Hermitian symmetry: max|Im| = {max_im:e}, max|Re| = {max_re:e}"
        )));
    }
    let power: f64 = filter.iter().map(|f| f * f).sum();
    Ok(FrameStack {
        grid: *grid,
        params: *params,
        seed,
        n_frames,
        sigma_i: (power / total as f64).sqrt(),
        data: buf.into_iter().map(|c| c.re).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(16, 16, 8.0, 50.0)
    }

    #[test]
    fn output_is_real_and_deterministic() {
        let p = MCParams::new([1.0, -0.5], 0.3, 0.3, 1.5, 0.5, 2.0).unwrap();
        let a = synth_spectral(&p, &grid(), 16, 4).unwrap();
        let b = synth_spectral(&p, &grid(), 16, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().any(|v| *v != 0.0));
        let g = synth_spectral_with(&p, &grid(), 15, 4, SpeedProfile::Gaussian).unwrap();
        assert_eq!(g.data.len(), 15 * 256);
    }

    #[test]
    fn zero_spectrum_gives_zero_stack() {
        let p = MCParams::new([0.0; 2], 0.0, 0.3, 1.5, 0.5, 2.0).unwrap();
        let s = filter_white_noise(&p, &grid(), 8, 1, &vec![0.0; 8 * 256]).unwrap();
        assert!(s.data.iter().all(|v| *v == 0.0));
        assert_eq!(s.sigma_i, 0.0);
    }

    #[test]
    fn analytic_spectrum_symmetric() {
        let p = MCParams::new([1.3, 0.4], 0.3, 0.3, 1.5, 0.5, 2.0).unwrap();
        let (nt, g) = (12, grid());
        let s = analytic_spectrum(&p, &g, nt, SpeedProfile::SpdeExact);
        let m = |k: usize, n: usize| (n - k) % n;
        for it in 0..nt {
            for iy in 0..g.ny {
                for ix in 0..g.nx {
                    let a = s[(it * g.ny + iy) * g.nx + ix];
                    let b = s[(m(it, nt) * g.ny + m(iy, g.ny)) * g.nx + m(ix, g.nx)];
                    assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
                }
            }
        }
        assert_eq!(s[0], 0.0);
    }
}
