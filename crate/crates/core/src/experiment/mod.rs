//! The speed-discrimination protocol: schedules, sessions and summaries.

mod aggregate;
mod config;
mod schedule;
mod session;

pub use aggregate::{aggregate, observations, to_csv, CellSummary};
pub use config::ExperimentConfig;
pub use schedule::{build_schedule, frames_per_interval, simulate_observer_mle, ScheduledTrial, StimulusSpec, STIMULUS_DELTA_MARGIN};
pub use session::{Response, SessionStatus, SessionStore, TrialRecord, TIMING_TOLERANCE};
