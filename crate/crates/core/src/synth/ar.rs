//! Causal synthesis: one critically damped AR(2) recursion per spatial
//! frequency, advanced in lock-step and emitted through an inverse FFT.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::fft::FftNd;
use super::grid::GridSpec;
use super::stack::FrameStack;
use crate::error::{Error, Result};
use crate::model::{MCParams, MotionCloud};

/// Recursion coefficients `x⁺ = a1·x + a2·x⁻ + e` for step ratio `Δ/ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArCoeffs {
    pub a1: f64,
    pub a2: f64,
}

impl ArCoeffs {
    pub fn new(delta: f64, nu: f64) -> Self {
        let alpha = 2.0 / nu;
        let beta = 1.0 / (nu * nu);
        Self {
            a1: 2.0 - delta * alpha - delta * delta * beta,
            a2: -1.0 + delta * alpha,
        }
    }

    /// Largest modulus among the roots of `ρ² − a1ρ − a2`.
    pub fn spectral_radius(&self) -> f64 {
        let disc = self.a1 * self.a1 + 4.0 * self.a2;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((self.a1 + s) / 2.0).abs().max(((self.a1 - s) / 2.0).abs())
        } else {
            (-self.a2).sqrt()
        }
    }

    /// Stationary variance for unit-variance driving noise.
    pub fn stationary_variance(&self) -> f64 {
        let (a1, a2) = (self.a1, self.a2);
        (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) * (1.0 - a2) - a1 * a1))
    }
}

/// A single-frequency recursion, used for diagnostics and validation.
#[derive(Debug, Clone, Copy)]
pub struct ScalarAr2 {
    pub coeffs: ArCoeffs,
    prev: Complex64,
    cur: Complex64,
}

impl ScalarAr2 {
    pub fn new(delta: f64, nu: f64) -> Self {
        Self {
            coeffs: ArCoeffs::new(delta, nu),
            prev: Complex64::default(),
            cur: Complex64::default(),
        }
    }

    pub fn step(&mut self, drive: Complex64) -> Complex64 {
        let next = self.coeffs.a1 * self.cur + self.coeffs.a2 * self.prev + drive;
        self.prev = self.cur;
        self.cur = next;
        next
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    a1: f64,
    a2: f64,
    gain: f64,
    xi: [f64; 2],
}

/// Streaming synthesizer state. Owned by one stream at a time.
#[derive(Debug, Clone)]
pub struct SynthState {
    grid: GridSpec,
    params: MCParams,
    seed: u64,
    bins: Vec<Bin>,
    prev: Vec<Complex64>,
    cur: Vec<Complex64>,
    work: Vec<Complex64>,
    fft: FftNd,
    rng: ChaCha8Rng,
    steps_per_frame: usize,
    frame: u64,
    warmed: bool,
    sigma_i: f64,
    nu_max: f64,
}

pub fn init_synth(params: &MCParams, grid: &GridSpec, seed: u64) -> Result<SynthState> {
    SynthState::new(params, grid, seed)
}

impl SynthState {
    pub fn new(params: &MCParams, grid: &GridSpec, seed: u64) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        let cloud = MotionCloud::new(*params);
        let delta = grid.delta();
        let n = grid.n_pixels();
        // Per-pixel white noise of unit variance, scaled to a space-time
        // white-noise increment over one cell and one step.
        let noise_scale = delta.powf(1.5) / grid.dx();
        let mut bins = vec![Bin::default(); n];
        let mut var_sum = 0.0;
        let mut worst = 0.0f64;
        let mut nu_max = 0.0f64;
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                if !grid.is_active(iy, ix) {
                    continue;
                }
                let xi = grid.xi(iy, ix);
                let c = cloud.spde_coeffs(xi)?;
                let ar = ArCoeffs::new(delta, c.nu_hat);
                worst = worst.max(ar.spectral_radius());
                nu_max = nu_max.max(c.nu_hat);
                let gain = c.sigma_w_hat * noise_scale;
                var_sum += ar.stationary_variance() * gain * gain * n as f64;
                bins[iy * grid.nx + ix] = Bin {
                    a1: ar.a1,
                    a2: ar.a2,
                    gain,
                    xi,
                };
            }
        }
        if worst >= 1.0 {
            return Err(Error::Config(format!(
                "recursion unstable: delta = {delta} s exceeds the maximum admissible delta {:.6e} s \
                 for sigma_r = {} on this grid (largest root modulus {worst:.6})",
                grid.max_stable_delta(params),
                params.sigma_r
            )));
        }
        Ok(Self {
            grid: *grid,
            params: *params,
            seed,
            bins,
            prev: vec![Complex64::default(); n],
            cur: vec![Complex64::default(); n],
            work: vec![Complex64::default(); n],
            fft: FftNd::new(&[grid.ny, grid.nx]),
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps_per_frame: grid.steps_per_frame()?,
            frame: 0,
            warmed: false,
            sigma_i: (var_sum / (n as f64 * n as f64)).sqrt(),
            nu_max,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &MCParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frames_emitted(&self) -> u64 {
        self.frame
    }

    pub fn is_warmed(&self) -> bool {
        self.warmed
    }

    /// Stationary pixel standard deviation.
    pub fn sigma_i(&self) -> f64 {
        self.sigma_i
    }

    /// Default warm-up length: ten relaxation times of the slowest mode.
    pub fn default_warm_up_steps(&self) -> usize {
        (10.0 * self.nu_max / self.grid.delta()).ceil() as usize
    }

    /// Spectral state at the current step (row-major, DC first).
    pub fn spectrum(&self) -> &[Complex64] {
        &self.cur
    }

    /// Multiplies the driving-noise gain of every bin. Test hook for fault
    /// injection; the reported `sigma_i` is left unchanged.
    #[doc(hidden)]
    pub fn scale_noise(&mut self, factor: f64) {
        for b in &mut self.bins {
            b.gain *= factor;
        }
    }

    pub fn warm_up(&mut self, n_steps: Option<usize>) {
        let n = n_steps.unwrap_or_else(|| self.default_warm_up_steps());
        for _ in 0..n {
            self.advance();
        }
        self.warmed = true;
    }

    fn advance(&mut self) {
        for w in self.work.iter_mut() {
            *w = Complex64::new(StandardNormal.sample(&mut self.rng), 0.0);
        }
        self.fft.forward(&mut self.work);
        for (i, b) in self.bins.iter().enumerate() {
            let next = b.a1 * self.cur[i] + b.a2 * self.prev[i] + b.gain * self.work[i];
            self.prev[i] = next;
        }
        std::mem::swap(&mut self.prev, &mut self.cur);
    }

    /// Advances one frame period and returns the frame (ny × nx, row-major).
    pub fn step(&mut self) -> Result<Vec<f64>> {
        if !self.warmed {
            self.warm_up(None);
        }
        for _ in 0..self.steps_per_frame {
            self.advance();
        }
        let t = self.frame as f64 / self.grid.fps;
        let v = self.params.v0;
        for (i, b) in self.bins.iter().enumerate() {
            let shift = -2.0 * PI * (b.xi[0] * v[0] + b.xi[1] * v[1]) * t;
            self.work[i] = self.cur[i] * Complex64::from_polar(1.0, shift);
        }
        self.fft.inverse(&mut self.work);
        let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
        let mut frame = Vec::with_capacity(self.work.len());
        for c in &self.work {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite sample in frame {}",
                    self.frame
                )));
            }
            max_re = max_re.max(c.re.abs());
            max_im = max_im.max(c.im.abs());
            frame.push(c.re);
        }
        if max_im > 1e-8 * max_re.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "frame {} lost Hermitian symmetry: max|Im| = {max_im:e}, max|Re| = {max_re:e}",
                self.frame
            )));
        }
        self.frame += 1;
        Ok(frame)
    }

    /// Emits `n_frames` consecutive frames as a stack.
    pub fn render(&mut self, n_frames: usize) -> Result<FrameStack> {
        let mut data = Vec::with_capacity(n_frames * self.grid.n_pixels());
        for _ in 0..n_frames {
            data.extend(self.step()?);
        }
        Ok(FrameStack {
            grid: self.grid,
            params: self.params,
            seed: self.seed,
            n_frames,
            sigma_i: self.sigma_i,
            data,
        })
    }
}

/// Streams `n_frames` from a freshly warmed recursion.
pub fn synth_ar(params: &MCParams, grid: &GridSpec, n_frames: usize, seed: u64) -> Result<FrameStack> {
    let mut state = SynthState::new(params, grid, seed)?;
    state.warm_up(None);
    state.render(n_frames)
}
