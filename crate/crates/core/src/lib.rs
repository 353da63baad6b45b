//! Quasi-harmonic analysis, cascaded ARMA envelopes and harmonic
//! resynthesis with time- and pitch-scale modification.

pub mod arma;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod harmonics;
pub mod interp;
pub mod metrics;
pub mod modify;
pub mod qhm;
pub mod signal;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};

use std::f64::consts::PI;

/// Map an angle to [-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    // rounding on large arguments can land a hair outside
    (x - 2.0 * PI * (x / (2.0 * PI)).round()).clamp(-PI, PI)
}
