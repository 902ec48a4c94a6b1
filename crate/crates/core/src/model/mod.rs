mod convert;
mod density;
mod ltransform;
mod params;
mod spectrum;

pub use convert::{convert_mode_std, convert_octave};
pub use density::{eval_fr, eval_ftheta, eval_fz, mc_power_spectrum, MotionCloud, SpeedProfile};
pub use ltransform::{h, l_half_normal, l_transform, linv_h};
pub use params::{wrap_angle, DerivedParams, FreqPoint, MCParams};
pub use spectrum::{spde_coeffs, SpdeCoeffs};
