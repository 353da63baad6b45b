//! Whole-utterance QHM analysis.

use rayon::prelude::*;

use super::adaptive::{refine_adaptive, AdaptiveMode};
use super::ls::{fit_with_basis, qhm_ls_fit, Basis, QhmFrameParams};
use super::pitch::{detect_f0, PitchConfig};
use super::{frequency_correction, framewise_amp_phase};
use crate::error::{invalid, Error, Result};
use crate::harmonics::{ComponentRule, F0Track, HarmonicSet};
use crate::signal::{FrameGrid, SignalBuffer, WindowKind};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Seconds between frame centers.
    pub frame_shift: f64,
    /// Half the analysis window (s).
    pub half_window: f64,
    pub window: WindowKind,
    pub rule: ComponentRule,
    pub pitch: PitchConfig,
    /// Adaptive refinement mode and iteration cap.
    pub adaptive: Option<(AdaptiveMode, usize)>,
    /// Replace voiced f0 values by the amplitude-weighted mean of `f_k / k`
    /// after correction.
    pub refine_f0: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            frame_shift: 0.005,
            half_window: 0.01,
            window: WindowKind::Hann,
            rule: ComponentRule::default(),
            pitch: PitchConfig::default(),
            adaptive: None,
            refine_f0: true,
        }
    }
}

impl AnalysisConfig {
    pub fn grid_for(&self, buffer: &SignalBuffer) -> Result<FrameGrid> {
        FrameGrid::for_signal(
            buffer.len(),
            buffer.sample_rate(),
            self.frame_shift,
            self.half_window,
            self.window,
        )
    }
}

/// Per-frame diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameFlags {
    /// The normal equations needed a ridge term.
    pub regularized: bool,
    /// Too few weighted samples for slopes; amplitudes only, no correction.
    pub amplitude_only: bool,
    /// No solution at all; the frame carries zero amplitudes.
    pub failed: bool,
    /// Components whose amplitude was below the floor.
    pub undefined_corrections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub harmonics: HarmonicSet,
    pub f0: F0Track,
    pub flags: Vec<FrameFlags>,
    /// Reconstruction SNR (dB) before and after each accepted adaptive
    /// iteration.
    pub adaptive_snr: Vec<f64>,
}

pub(crate) struct FrameResult {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub flags: FrameFlags,
}

/// Fit one frame on the stationary basis and apply the frequency correction.
/// The correction is limited to half the component spacing so neighbours
/// cannot swap.
pub(crate) fn analyze_frame(
    signal: &[f64],
    grid: &FrameGrid,
    window: &[f64],
    l: usize,
    f_hats: &[f64],
) -> FrameResult {
    let fs = grid.sample_rate() as f64;
    let frame = grid.frame(signal, l, window);
    let mut flags = FrameFlags::default();
    let fit = match qhm_ls_fit(&frame, f_hats, fs) {
        Ok(p) => Ok(p),
        Err(Error::WindowTooShort { .. }) => {
            flags.amplitude_only = true;
            fit_with_basis(&frame, f_hats, Basis::Stationary, false)
        }
        Err(e) => Err(e),
    };
    match fit {
        Ok(params) => finish_frame(&params, f_hats, fs, flags),
        Err(_) => {
            flags.failed = true;
            FrameResult {
                frequencies: f_hats.to_vec(),
                amplitudes: vec![0.0; f_hats.len()],
                phases: vec![0.0; f_hats.len()],
                flags,
            }
        }
    }
}

pub(crate) fn finish_frame(params: &QhmFrameParams, f_hats: &[f64], fs: f64, mut flags: FrameFlags) -> FrameResult {
    flags.regularized |= params.regularized;
    let correction = frequency_correction(params);
    flags.undefined_corrections = correction.undefined.iter().filter(|u| **u).count();
    let (amplitudes, phases) = framewise_amp_phase(params);
    let nyquist = fs / 2.0;
    let frequencies = f_hats
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            if flags.amplitude_only {
                return f;
            }
            let lower = if k == 0 { f } else { f - f_hats[k - 1] };
            let upper = f_hats.get(k + 1).map_or(lower, |n| n - f);
            let eta = correction.eta[k].clamp(-0.5 * lower, 0.5 * upper);
            let corrected = f + eta;
            if corrected > 0.0 && corrected < nyquist {
                corrected
            } else {
                f
            }
        })
        .collect();
    FrameResult {
        frequencies,
        amplitudes,
        phases,
        flags,
    }
}

pub fn analyze(buffer: &SignalBuffer, config: &AnalysisConfig, f0: Option<F0Track>) -> Result<Analysis> {
    if buffer.is_empty() {
        return Err(Error::EmptyAudio("<buffer>".into()));
    }
    let grid = config.grid_for(buffer)?;
    let f0 = match f0 {
        Some(track) => {
            if track.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    what: "f0 track vs analysis frames",
                    left: track.len(),
                    right: grid.len(),
                });
            }
            F0Track::new(grid.clone(), track.values)?
        }
        None => detect_f0(buffer, &grid, &config.pitch)?,
    };
    let fs = buffer.sample_rate() as f64;
    let window = grid.window_weights();
    let x = buffer.samples();
    let results: Vec<FrameResult> = (0..grid.len())
        .into_par_iter()
        .map(|l| {
            let f_hats = config.rule.frequencies(f0.values[l], fs);
            analyze_frame(x, &grid, &window, l, &f_hats)
        })
        .collect();
    let mut flags = Vec::with_capacity(results.len());
    let mut freqs = Vec::with_capacity(results.len());
    let mut amps = Vec::with_capacity(results.len());
    let mut phases = Vec::with_capacity(results.len());
    for r in results {
        flags.push(r.flags);
        freqs.push(r.frequencies);
        amps.push(r.amplitudes);
        phases.push(r.phases);
    }
    let mut harmonics = HarmonicSet::from_measurements(grid, freqs, amps, &phases)?;
    let mut adaptive_snr = Vec::new();
    if let Some((mode, iters)) = config.adaptive {
        let refined = refine_adaptive(buffer, &harmonics, mode, iters)?;
        adaptive_snr = refined.snr_history;
        for &l in &refined.failed_frames {
            flags[l].failed = true;
        }
        harmonics = refined.set;
    }
    let f0 = if config.refine_f0 {
        refine_f0_from_harmonics(&harmonics, &f0)?
    } else {
        f0
    };
    Ok(Analysis {
        harmonics,
        f0,
        flags,
        adaptive_snr,
    })
}

/// Voiced frames get `sum A_k^2 f_k / k / sum A_k^2`; unvoiced frames and
/// frames without energy keep their value.
pub fn refine_f0_from_harmonics(set: &HarmonicSet, f0: &F0Track) -> Result<F0Track> {
    if set.n_frames() != f0.len() {
        return Err(invalid("harmonic set and f0 track differ in frame count"));
    }
    let values = f0
        .values
        .iter()
        .enumerate()
        .map(|(l, &v)| {
            if v <= 0.0 {
                return v;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (k, (f, a)) in set.frequencies[l].iter().zip(&set.amplitudes[l]).enumerate() {
                let w = a * a;
                num += w * f / (k + 1) as f64;
                den += w;
            }
            if den > 0.0 {
                let r = num / den;
                // stay with the detector when the fit disagrees wildly
                if (r / v - 1.0).abs() < 0.1 {
                    r
                } else {
                    v
                }
            } else {
                v
            }
        })
        .collect();
    F0Track::new(f0.grid.clone(), values)
}
