//! Empirical statistics of synthesized stacks and their analytic
//! counterparts.

use num_complex::Complex64;

use super::fft::{fftfreq, FftNd};
use super::grid::GridSpec;
use super::stack::FrameStack;
use crate::error::{config, Result};
use crate::model::{FreqPoint, MCParams, MotionCloud, SpeedProfile};
use crate::quad::{integrate_to_infinity, QuadOptions};

/// Streaming ensemble average of the 3-D periodogram `dx² dt |DFT|² / N`,
/// in the same units as the analytic spectrum.
#[derive(Debug)]
pub struct PeriodogramAccumulator {
    grid: GridSpec,
    nt: usize,
    fft: FftNd,
    buf: Vec<Complex64>,
    acc: Vec<f64>,
    count: usize,
}

impl PeriodogramAccumulator {
    pub fn new(grid: &GridSpec, nt: usize) -> Self {
        let total = nt * grid.n_pixels();
        Self {
            grid: *grid,
            nt,
            fft: FftNd::new(&[nt, grid.ny, grid.nx]),
            buf: vec![Complex64::default(); total],
            acc: vec![0.0; total],
            count: 0,
        }
    }

    pub fn add(&mut self, stack: &FrameStack) -> Result<()> {
        if stack.n_frames != self.nt || stack.grid.nx != self.grid.nx || stack.grid.ny != self.grid.ny {
            return config("all stacks in a periodogram ensemble must share one shape");
        }
        for (b, v) in self.buf.iter_mut().zip(&stack.data) {
            *b = Complex64::new(*v, 0.0);
        }
        self.fft.forward(&mut self.buf);
        for (a, b) in self.acc.iter_mut().zip(&self.buf) {
            *a += b.norm_sqr();
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return config("periodogram needs at least one stack");
        }
        let g = self.grid;
        let scale = g.dx() * g.dx() * g.dt() / (self.acc.len() as f64 * self.count as f64);
        Ok(self.acc.into_iter().map(|a| a * scale).collect())
    }
}

pub fn periodogram(stacks: &[FrameStack]) -> Result<Vec<f64>> {
    let first = match stacks.first() {
        Some(s) => s,
        None => return config("periodogram needs at least one stack"),
    };
    let mut acc = PeriodogramAccumulator::new(&first.grid, first.n_frames);
    for s in stacks {
        acc.add(s)?;
    }
    acc.finish()
}

/// `‖e − a‖₂ / ‖a‖₂` restricted to bins where `a ≥ floor_frac · max a`.
pub fn band_relative_l2(empirical: &[f64], analytic: &[f64], floor_frac: f64) -> f64 {
    let peak = analytic.iter().cloned().fold(0.0, f64::max);
    let cut = floor_frac * peak;
    let (mut num, mut den) = (0.0, 0.0);
    for (e, a) in empirical.iter().zip(analytic) {
        if *a >= cut && *a > 0.0 {
            num += (e - a) * (e - a);
            den += a * a;
        }
    }
    (num / den).sqrt()
}

pub fn relative_l2(empirical: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = empirical.iter().zip(reference).map(|(e, r)| (e - r) * (e - r)).sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    (num / den).sqrt()
}

/// Normalized autocorrelation `Re Σ x_{t+k} x̄_t / Σ |x_t|²` for lags
/// `0..=max_lag`, each lag averaged over its own overlap.
pub fn autocorrelation(series: &[Complex64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let c0 = series.iter().map(|x| x.norm_sqr()).sum::<f64>() / n as f64;
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| {
            let s: f64 = series[k..]
                .iter()
                .zip(series)
                .map(|(a, b)| (a * b.conj()).re)
                .sum();
            s / (n - k) as f64 / c0
        })
        .collect()
}

/// Sample kurtosis `m4 / m2²` (3 for a Gaussian).
pub fn kurtosis(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in values {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    (m4 / n) / ((m2 / n) * (m2 / n))
}

/// Non-circular spatial autocovariance averaged over frames, for lags
/// `|dx|, |dy| ≤ max_lag`. Index `(dy + L)(2L + 1) + (dx + L)`.
pub fn spatial_covariance<'a, I>(frames: I, nx: usize, ny: usize, max_lag: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let (px, py) = (2 * nx, 2 * ny);
    let mut fft = FftNd::new(&[py, px]);
    let mut acc = vec![0.0; px * py];
    let mut buf = vec![Complex64::default(); px * py];
    let mut count = 0usize;
    for f in frames {
        buf.iter_mut().for_each(|b| *b = Complex64::default());
        for iy in 0..ny {
            for ix in 0..nx {
                buf[iy * px + ix] = Complex64::new(f[iy * nx + ix], 0.0);
            }
        }
        fft.forward(&mut buf);
        for b in buf.iter_mut() {
            *b = Complex64::new(b.norm_sqr(), 0.0);
        }
        fft.inverse(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.re;
        }
        count += 1;
    }
    let l = max_lag as i64;
    let side = 2 * max_lag + 1;
    let mut out = vec![0.0; side * side];
    for dy in -l..=l {
        for dx in -l..=l {
            let iy = dy.rem_euclid(py as i64) as usize;
            let ix = dx.rem_euclid(px as i64) as usize;
            let overlap = (nx as i64 - dx.abs()) * (ny as i64 - dy.abs());
            out[((dy + l) as usize) * side + (dx + l) as usize] =
                acc[iy * px + ix] / (overlap as f64 * count as f64);
        }
    }
    out
}

/// Spatial correlation shape predicted by the spectrum: the inverse Fourier
/// transform of `∫ S(ξ, τ) dτ`, evaluated on a 2× finer, 256² grid and
/// normalized to 1 at the origin. Same indexing as [`spatial_covariance`].
pub fn spatial_correlation_oracle(
    params: &MCParams,
    grid: &GridSpec,
    max_lag: usize,
    profile: SpeedProfile,
) -> Result<Vec<f64>> {
    let m = 256usize;
    if 2 * max_lag >= m / 2 {
        return config("lag window too large for the oracle grid");
    }
    let fine = grid.dx() / 2.0;
    let cloud = MotionCloud::new(*params);
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-9,
        max_intervals: 2000,
    };
    let mut buf = vec![Complex64::default(); m * m];
    for iy in 0..m {
        for ix in 0..m {
            let xi = [fftfreq(ix, m) / fine, fftfreq(iy, m) / fine];
            let r = xi[0].hypot(xi[1]);
            if r == 0.0 || cloud.spatial_envelope(xi) < 1e-300 {
                continue;
            }
            let centre = -(params.v0[0] * xi[0] + params.v0[1] * xi[1]);
            let scale = params.sigma_r * r;
            let s = |u: f64| cloud.power_spectrum(&FreqPoint::new(xi, centre + scale * u), profile);
            let total = integrate_to_infinity(s, 0.0, opts)? + integrate_to_infinity(|u| s(-u), 0.0, opts)?;
            buf[iy * m + ix] = Complex64::new(total * scale, 0.0);
        }
    }
    let mut fft = FftNd::new(&[m, m]);
    fft.inverse(&mut buf);
    let c0 = buf[0].re;
    let l = max_lag as i64;
    let side = 2 * max_lag + 1;
    let mut out = vec![0.0; side * side];
    for dy in -l..=l {
        for dx in -l..=l {
            let iy = (2 * dy).rem_euclid(m as i64) as usize;
            let ix = (2 * dx).rem_euclid(m as i64) as usize;
            out[((dy + l) as usize) * side + (dx + l) as usize] = buf[iy * m + ix].re / c0;
        }
    }
    Ok(out)
}
