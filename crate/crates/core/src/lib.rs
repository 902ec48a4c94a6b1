//! Motion Cloud textures: spectral model, synthesis, observer inference and
//! the 2AFC experiment protocol.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod inference;
pub mod model;
pub mod quad;
pub mod special;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
