//! Obstacle-field transit models: Markov slat fields, closed-form transit
//! probabilities, a quantized steering protocol with Monte Carlo drivers,
//! monocular time-to-transit estimation and the feedback laws built on it.

// parameter checks are written as `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod camera;
pub mod control;
pub mod dubins;
pub mod error;
pub mod field;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
