mod fit;
mod mle;
mod observer;

pub use fit::{
    fit_psychometric, log_likelihood, recover_prior_likelihood, AStar, Condition, InvalidCondition, Observation,
    PsychometricFit, Recovery, LAM_CEIL, LAM_FLOOR,
};
pub use mle::{
    minimize_quartic, mle_speed, mle_speed_with, quartic_coefficients, quartic_energy, real_cubic_roots, MleReport,
    Provenance, DEFAULT_U_BOUND,
};
pub use observer::{
    inv_log_speed, log_speed, map_estimate, psi, psychometric_theoretical, simulate_observer, Choice, ObserverModel,
    TrialSpec, ZLevel, DEFAULT_U_MAX, U0,
};
