use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::inference::{mle_speed, Choice, TrialSpec};
use crate::model::{convert_mode_std, MCParams};
use crate::synth::{synth_ar, FrameStack, GridSpec};

/// Stability margin used when a stimulus grid leaves `delta` unset.
pub const STIMULUS_DELTA_MARGIN: f64 = 0.9;

/// One interval's stimulus: speed and frequency mode, the resolved cloud
/// parameters and the synthesis seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub u: f64,
    pub z: f64,
    pub params: MCParams,
    pub seed: u64,
}

impl StimulusSpec {
    pub fn new(config: &ExperimentConfig, u: f64, z: f64, seed: u64) -> Result<Self> {
        let (z0, sigma_z) = convert_mode_std(z, config.d_z)?;
        let sigma_r = 1.0 / (config.t_star * z0);
        let params = MCParams::new([u, 0.0], config.theta0, config.sigma_theta, z0, sigma_z, sigma_r)?;
        Ok(Self { u, z, params, seed })
    }

    /// The grid actually used to synthesize this stimulus: an unset
    /// `delta` is refined until the recursion is stable.
    pub fn effective_grid(&self, grid: &GridSpec) -> GridSpec {
        match grid.delta {
            Some(_) => *grid,
            None => grid.with_stable_delta(&self.params, STIMULUS_DELTA_MARGIN),
        }
    }

    pub fn render(&self, grid: &GridSpec, n_frames: usize) -> Result<FrameStack> {
        synth_ar(&self.params, &self.effective_grid(grid), n_frames, self.seed)
    }
}

/// Frames in one stimulus interval.
pub fn frames_per_interval(config: &ExperimentConfig, grid: &GridSpec) -> usize {
    ((config.stimulus_ms * 1e-3 * grid.fps).round() as usize).max(1)
}

/// A scheduled trial. The speed-varied stimulus runs at `(u★ + du, z★)`,
/// the frequency-varied one at `(u★, z★ + dz)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTrial {
    pub trial_id: usize,
    pub du: f64,
    pub dz: f64,
    /// Interval holding the speed-varied stimulus.
    pub u_interval: Choice,
    pub first: StimulusSpec,
    pub second: StimulusSpec,
}

impl ScheduledTrial {
    pub fn spec(&self) -> TrialSpec {
        TrialSpec {
            first: (self.first.u, self.first.z),
            second: (self.second.u, self.second.z),
        }
    }
}

/// Observer variant that perceives each interval through `mle_speed` on
/// the synthesized stimulus instead of a Gaussian draw; picks the interval
/// with the larger estimate. Slow: one synthesis per interval.
pub fn simulate_observer_mle(schedule: &[ScheduledTrial], grid: &GridSpec, n_frames: usize) -> Result<Vec<Choice>> {
    schedule
        .iter()
        .map(|t| {
            let first = mle_speed(&t.first.render(grid, n_frames)?, &t.first.params)?.u_hat;
            let second = mle_speed(&t.second.render(grid, n_frames)?, &t.second.params)?.u_hat;
            Ok(if first >= second { Choice::First } else { Choice::Second })
        })
        .collect()
}

/// All cells × repetitions in a seeded random order, with seeded interval
/// assignment and stimulus seeds.
pub fn build_schedule(config: &ExperimentConfig, seed: u64) -> Result<Vec<ScheduledTrial>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::with_capacity(config.n_trials());
    for &du in &config.delta_u {
        for &dz in &config.delta_z {
            for _ in 0..config.reps_per_cell {
                cells.push((du, dz));
            }
        }
    }
    cells.shuffle(&mut rng);
    cells
        .into_iter()
        .enumerate()
        .map(|(trial_id, (du, dz))| {
            let u_first = rng.gen::<bool>();
            let speed = StimulusSpec::new(config, config.u_star + du, config.z_star, rng.gen())?;
            let freq = StimulusSpec::new(config, config.u_star, config.z_star + dz, rng.gen())?;
            let (first, second, u_interval) = if u_first {
                (speed, freq, Choice::First)
            } else {
                (freq, speed, Choice::Second)
            };
            Ok(ScheduledTrial {
                trial_id,
                du,
                dz,
                u_interval,
                first,
                second,
            })
        })
        .collect()
}
