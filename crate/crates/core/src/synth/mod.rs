mod ar;
mod fft;
mod grid;
pub mod io;
mod measure;
mod shot;
mod spectral;
mod stack;

pub use ar::{init_synth, synth_ar, ArCoeffs, ScalarAr2, SynthState};
pub use fft::{fftfreq, is_nyquist, mirror, FftNd};
pub use grid::{GridSpec, MAX_STEP_RATIO};
pub use measure::{
    autocorrelation, band_relative_l2, kurtosis, periodogram, PeriodogramAccumulator, relative_l2, spatial_correlation_oracle,
    spatial_covariance,
};
pub use shot::{sample_von_mises, shot_noise_sample, shot_noise_with, SpeedSampler};
pub use spectral::{analytic_spectrum, synth_spectral, synth_spectral_with};
pub use stack::{FrameStack, Quantization};
