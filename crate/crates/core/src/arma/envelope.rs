//! Whole-utterance envelope fitting from analysed harmonics.

use rayon::prelude::*;

use super::{fit_frame, ArmaCascade, ArmaFrame, ArmaOrders, FitOptions, FitOutcome, FitTarget};
use crate::error::{invalid, Result};
use crate::harmonics::{ComponentRule, F0Track, HarmonicSet};
use crate::synth::{excitation_phase, harmonic_grid};
use crate::wrap_phase;

/// Per-frame targets on the harmonic grid of `f0`: the analysed amplitude of
/// component k and its measured phase minus the excitation phase that
/// synthesis will regenerate.
pub fn targets_from_harmonics(set: &HarmonicSet, f0: &F0Track, rule: &ComponentRule) -> Result<Vec<Vec<FitTarget>>> {
    if set.grid != f0.grid {
        return Err(invalid("harmonics and f0 track use different frame grids"));
    }
    let (freqs, counts) = harmonic_grid(f0, rule);
    let excitation = excitation_phase(&freqs, f0.grid.centers())?;
    Ok((0..f0.len())
        .map(|l| {
            let k = counts[l].min(set.amplitudes[l].len());
            (0..k)
                .map(|c| FitTarget {
                    frequency: freqs[l][c],
                    amplitude: set.amplitudes[l][c],
                    phase: wrap_phase(set.phases[l][c] - excitation[l][c]),
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeFit {
    pub cascade: ArmaCascade,
    pub outcomes: Vec<FitOutcome>,
}

impl CascadeFit {
    /// Frames whose final loss per target exceeds `threshold`.
    pub fn frames_above(&self, targets: &[Vec<FitTarget>], threshold: f64) -> Vec<usize> {
        self.outcomes
            .iter()
            .zip(targets)
            .enumerate()
            .filter(|(_, (o, t))| !t.is_empty() && o.loss / t.len() as f64 > threshold)
            .map(|(l, _)| l)
            .collect()
    }
}

/// Fit every frame independently (in parallel, results in frame order).
pub fn fit_cascade(targets: &[Vec<FitTarget>], f0: &F0Track, orders: ArmaOrders, options: &FitOptions) -> Result<CascadeFit> {
    if targets.len() != f0.len() {
        return Err(invalid("one target list per frame required"));
    }
    let fs = f0.grid.sample_rate() as f64;
    let outcomes = targets
        .par_iter()
        .map(|t| fit_frame(t, orders, options, fs))
        .collect::<Result<Vec<_>>>()?;
    let frames: Vec<ArmaFrame> = outcomes.iter().map(|o| o.frame.clone()).collect();
    let cascade = ArmaCascade::new(f0.grid.clone(), orders, frames)?;
    Ok(CascadeFit { cascade, outcomes })
}
