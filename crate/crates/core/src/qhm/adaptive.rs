//! aQHM / eaQHM refinement on a nonstationary phase basis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{finish_frame, FrameFlags};
use super::ls::{fit_with_basis, Basis};
use super::{integrate_phase, AMPLITUDE_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::harmonics::HarmonicSet;
use crate::interp::linear_interp;
use crate::signal::SignalBuffer;
use crate::synth::synthesize_qhm;
use crate::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptiveMode {
    /// Adaptive phase basis.
    Aqhm,
    /// Adaptive phase basis plus amplitude amplifier.
    Eaqhm,
}

impl std::str::FromStr for AdaptiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aqhm" => Ok(Self::Aqhm),
            "eaqhm" => Ok(Self::Eaqhm),
            _ => Err(invalid(format!("unknown adaptive mode '{s}'"))),
        }
    }
}

/// Relative error improvement below which iteration stops.
pub const MIN_IMPROVEMENT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveResult {
    pub set: HarmonicSet,
    /// Reconstruction SNR (dB) of the initial set and of every accepted
    /// iteration.
    pub snr_history: Vec<f64>,
    /// Accepted iterations.
    pub iterations: usize,
    /// Frames whose least-squares fit failed in the last accepted iteration
    /// (they kept their previous parameters).
    pub failed_frames: Vec<usize>,
}

/// Squared reconstruction error of `set` against `buffer` and the reference
/// energy over the overlapping span.
pub fn reconstruction_error(buffer: &SignalBuffer, set: &HarmonicSet) -> Result<(f64, f64)> {
    let y = synthesize_qhm(set)?;
    let x = buffer.samples();
    let start = set.grid.centers().first().map_or(0, |t| (t * buffer.sample_rate() as f64).round() as usize);
    let n = y.len().min(x.len().saturating_sub(start));
    let (mut err, mut energy) = (0.0, 0.0);
    for i in 0..n {
        let r = x[start + i];
        energy += r * r;
        err += (r - y.samples()[i]).powi(2);
    }
    Ok((err, energy))
}

fn snr_db(err: f64, energy: f64) -> f64 {
    if err <= 0.0 {
        120.0
    } else {
        (10.0 * (energy / err).log10()).min(120.0)
    }
}

pub fn refine_adaptive(
    buffer: &SignalBuffer,
    initial: &HarmonicSet,
    mode: AdaptiveMode,
    max_iters: usize,
) -> Result<AdaptiveResult> {
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    if buffer.sample_rate() != initial.grid.sample_rate() {
        return Err(invalid("buffer and harmonic set sample rates differ"));
    }
    let mut best = initial.clone();
    let (mut best_err, energy) = reconstruction_error(buffer, &best)?;
    let mut history = vec![snr_db(best_err, energy)];
    let mut failed_frames = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters {
        let (candidate, failed) = iterate(buffer, &best, mode)?;
        let (err, _) = reconstruction_error(buffer, &candidate)?;
        if !(err < best_err) {
            break;
        }
        let improvement = (best_err - err) / best_err;
        best = candidate;
        best_err = err;
        failed_frames = failed;
        iterations += 1;
        history.push(snr_db(err, energy));
        if improvement < MIN_IMPROVEMENT {
            break;
        }
    }
    Ok(AdaptiveResult {
        set: best,
        snr_history: history,
        iterations,
        failed_frames,
    })
}

fn iterate(buffer: &SignalBuffer, set: &HarmonicSet, mode: AdaptiveMode) -> Result<(HarmonicSet, Vec<usize>)> {
    let grid = &set.grid;
    let fs = grid.sample_rate() as f64;
    let centers = grid.centers();
    let window = grid.window_weights();
    let k_max = set.max_components();
    let dense_f = set.dense_frequencies();
    let dense_a = set.dense_amplitudes();
    let freq_cols: Vec<Vec<f64>> = (0..k_max).map(|k| dense_f.iter().map(|r| r[k]).collect()).collect();
    let amp_cols: Vec<Vec<f64>> = (0..k_max).map(|k| dense_a.iter().map(|r| r[k]).collect()).collect();
    let x = buffer.samples();

    let frames: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|l| {
            let f_hats = &set.frequencies[l];
            let k_count = f_hats.len();
            let previous = || {
                let phases = set.phases[l].iter().map(|p| wrap_phase(*p)).collect();
                (f_hats.clone(), set.amplitudes[l].clone(), phases)
            };
            if k_count == 0 {
                let (f, a, p) = previous();
                return Ok((f, a, p, false));
            }
            let frame = grid.frame(x, l, &window);
            let center = frame.times.iter().position(|t| *t == 0.0).unwrap_or(frame.times.len() / 2);
            let queries: Vec<f64> = frame.times.iter().map(|t| centers[l] + t).collect();
            let mut phases = Vec::with_capacity(k_count);
            let mut amplifiers = Vec::with_capacity(k_count);
            for k in 0..k_count {
                let inst = linear_interp(centers, &freq_cols[k], &queries)?;
                phases.push(integrate_phase(&inst, center, 1.0 / fs, 0.0)?);
                if mode == AdaptiveMode::Eaqhm {
                    let here = amp_cols[k][l];
                    if here > AMPLITUDE_FLOOR {
                        let a = linear_interp(centers, &amp_cols[k], &queries)?;
                        amplifiers.push(a.iter().map(|v| v / here).collect());
                    } else {
                        amplifiers.push(vec![1.0; queries.len()]);
                    }
                }
            }
            let with_slope = frame.effective_len() >= 4 * k_count;
            let basis = Basis::Adaptive {
                phases: &phases,
                amplifiers: (mode == AdaptiveMode::Eaqhm).then_some(amplifiers.as_slice()),
            };
            match fit_with_basis(&frame, f_hats, basis, with_slope) {
                Ok(params) => {
                    let flags = FrameFlags {
                        amplitude_only: !with_slope,
                        ..Default::default()
                    };
                    let r = finish_frame(&params, f_hats, fs, flags);
                    Ok((r.frequencies, r.amplitudes, r.phases, false))
                }
                Err(_) => {
                    let (f, a, p) = previous();
                    Ok((f, a, p, true))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut freqs = Vec::with_capacity(frames.len());
    let mut amps = Vec::with_capacity(frames.len());
    let mut phases = Vec::with_capacity(frames.len());
    let mut failed = Vec::new();
    for (l, (f, a, p, bad)) in frames.into_iter().enumerate() {
        freqs.push(f);
        amps.push(a);
        phases.push(p);
        if bad {
            failed.push(l);
        }
    }
    Ok((HarmonicSet::from_measurements(grid.clone(), freqs, amps, &phases)?, failed))
}
