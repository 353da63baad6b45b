//! Normalized-autocorrelation f0 detector with a voicing decision.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::harmonics::F0Track;
use crate::signal::{FrameGrid, SignalBuffer};

pub const DEFAULT_VOICING_THRESHOLD: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            f0_min: 50.0,
            f0_max: 500.0,
            voicing_threshold: DEFAULT_VOICING_THRESHOLD,
        }
    }
}

/// Relative height a shorter-lag peak needs to win over the global maximum
/// (guards against picking subharmonics).
const OCTAVE_RATIO: f64 = 0.9;
/// Mean-square level below which a segment counts as silent.
const SILENCE_POWER: f64 = 1e-10;

pub fn detect_f0(buffer: &SignalBuffer, grid: &FrameGrid, config: &PitchConfig) -> Result<F0Track> {
    if buffer.is_empty() {
        return Err(invalid("cannot detect f0 on an empty buffer"));
    }
    let fs = buffer.sample_rate() as f64;
    if !(config.f0_min > 0.0 && config.f0_min < config.f0_max && config.f0_max < fs / 4.0) {
        return Err(invalid(format!(
            "f0 range ({}, {}) must lie within (0, Nyquist / 2)",
            config.f0_min, config.f0_max
        )));
    }
    let lag_min = ((fs / config.f0_max).floor() as usize).max(2);
    let lag_max = (fs / config.f0_min).ceil() as usize;
    let len = lag_max;
    let x = buffer.samples();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|l| {
            let center = (grid.centers()[l] * fs).round() as i64;
            let span = (len + lag_max + 1) as i64;
            let mut start = center - ((len + lag_max) / 2) as i64;
            // keep the segment inside the signal near the edges
            if x.len() as i64 >= span {
                start = start.clamp(0, x.len() as i64 - span);
            }
            frame_f0(x, start, len, lag_min, lag_max, config.voicing_threshold, fs)
        })
        .collect();
    F0Track::new(grid.clone(), values)
}

fn frame_f0(
    x: &[f64],
    start: i64,
    len: usize,
    lag_min: usize,
    lag_max: usize,
    threshold: f64,
    fs: f64,
) -> f64 {
    let span = len + lag_max + 2;
    let seg: Vec<f64> = (0..span as i64)
        .map(|i| {
            let idx = start + i - 1;
            if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            }
        })
        .collect();
    // seg[1..] is aligned with `start`
    let base = &seg[1..1 + len];
    let e0: f64 = base.iter().map(|v| v * v).sum();
    if e0 < SILENCE_POWER * len as f64 {
        return 0.0;
    }
    let corr = |tau: usize| -> f64 {
        let other = &seg[1 + tau..1 + tau + len];
        let e1: f64 = other.iter().map(|v| v * v).sum();
        if e1 < SILENCE_POWER * len as f64 {
            return 0.0;
        }
        let num: f64 = base.iter().zip(other).map(|(a, b)| a * b).sum();
        num / (e0 * e1).sqrt()
    };
    let r: Vec<f64> = (lag_min - 1..=lag_max + 1).map(corr).collect();
    let at = |tau: usize| r[tau + 1 - lag_min];
    let peaks: Vec<usize> = (lag_min..=lag_max)
        .filter(|&t| at(t) >= at(t - 1) && at(t) > at(t + 1))
        .collect();
    let best = peaks.iter().map(|&t| at(t)).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= threshold) {
        return 0.0;
    }
    let tau = *peaks
        .iter()
        .find(|&&t| at(t) >= OCTAVE_RATIO * best)
        .expect("best peak is in the list");
    let (ym, y0, yp) = (at(tau - 1), at(tau), at(tau + 1));
    let denom = ym - 2.0 * y0 + yp;
    let shift = if denom.abs() > 1e-15 {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    fs / (tau as f64 + shift)
}
