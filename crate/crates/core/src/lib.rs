//! Physics models, Monte Carlo sequences and analysis for a waveguide-array
//! atom-photon interface.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bloch;
pub mod holo;
pub mod lm;
pub mod optics;
pub mod planner;
pub mod quantum;
pub mod rng;
pub mod sim;
