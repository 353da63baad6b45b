//! Framewise parameter tracks shared by analysis, synthesis and modification.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::FrameGrid;
use crate::synth::excitation_phase;
use crate::wrap_phase;

/// Component spacing used to seed unvoiced frames.
pub const UNVOICED_F0: f64 = 100.0;
/// Distance kept between the highest component and Nyquist.
pub const DEFAULT_K_GUARD: f64 = 50.0;

/// Per-frame fundamental frequency; 0 marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Track {
    pub grid: FrameGrid,
    pub values: Vec<f64>,
}

impl F0Track {
    pub fn new(grid: FrameGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "f0 values vs frames",
                left: values.len(),
                right: grid.len(),
            });
        }
        let nyquist = grid.sample_rate() as f64 / 2.0;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0 && **v < nyquist)) {
            return Err(invalid(format!("f0 value {v} outside [0, Nyquist)")));
        }
        Ok(Self { grid, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_voiced(&self, l: usize) -> bool {
        self.values[l] > 0.0
    }

    pub fn voicing(&self) -> Vec<bool> {
        self.values.iter().map(|v| *v > 0.0).collect()
    }
}

/// Rule giving the number of quasi-harmonics in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentRule {
    /// Hz kept free below Nyquist.
    pub guard: f64,
    /// Spacing used on unvoiced frames.
    pub unvoiced_f0: f64,
    /// Optional hard cap on K.
    pub max_components: Option<usize>,
}

impl Default for ComponentRule {
    fn default() -> Self {
        Self {
            guard: DEFAULT_K_GUARD,
            unvoiced_f0: UNVOICED_F0,
            max_components: None,
        }
    }
}

impl ComponentRule {
    /// Spacing actually used for a frame with the given f0.
    pub fn spacing(&self, f0: f64) -> f64 {
        if f0 > 0.0 {
            f0
        } else {
            self.unvoiced_f0
        }
    }

    /// K = floor((Nyquist - guard) / f0), capped.
    pub fn count(&self, f0: f64, sample_rate: f64) -> usize {
        let spacing = self.spacing(f0);
        let k = ((sample_rate / 2.0 - self.guard) / spacing).floor().max(0.0) as usize;
        match self.max_components {
            Some(cap) => k.min(cap),
            None => k,
        }
    }

    /// Harmonic frequencies `k * spacing`, k = 1..=K.
    pub fn frequencies(&self, f0: f64, sample_rate: f64) -> Vec<f64> {
        let spacing = self.spacing(f0);
        (1..=self.count(f0, sample_rate))
            .map(|k| k as f64 * spacing)
            .collect()
    }
}

/// Quasi-harmonic parameters of a whole utterance. Frames may carry different
/// component counts; component k of every frame belongs to the same track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSet {
    pub grid: FrameGrid,
    /// Hz, `[frame][k]`.
    pub frequencies: Vec<Vec<f64>>,
    /// Linear amplitudes `|a_k|`.
    pub amplitudes: Vec<Vec<f64>>,
    /// Unwrapped framewise phases (rad).
    pub phases: Vec<Vec<f64>>,
    /// Per-frame phase compensations in [-pi, pi].
    pub compensations: Vec<Vec<f64>>,
}

impl HarmonicSet {
    pub fn new(
        grid: FrameGrid,
        frequencies: Vec<Vec<f64>>,
        amplitudes: Vec<Vec<f64>>,
        phases: Vec<Vec<f64>>,
        compensations: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let set = Self {
            grid,
            frequencies,
            amplitudes,
            phases,
            compensations,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        for (what, rows) in [
            ("frequency rows", &self.frequencies),
            ("amplitude rows", &self.amplitudes),
            ("phase rows", &self.phases),
            ("compensation rows", &self.compensations),
        ] {
            if rows.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    left: rows.len(),
                    right: n,
                });
            }
        }
        let nyquist = self.grid.sample_rate() as f64 / 2.0;
        for l in 0..n {
            let k = self.frequencies[l].len();
            if self.amplitudes[l].len() != k || self.phases[l].len() != k || self.compensations[l].len() != k {
                return Err(Error::LengthMismatch {
                    what: "components within frame",
                    left: k,
                    right: self.amplitudes[l].len(),
                });
            }
            for c in 0..k {
                let f = self.frequencies[l][c];
                if !(f.is_finite() && f.abs() < nyquist) {
                    return Err(invalid(format!("frame {l} component {c}: frequency {f} not below Nyquist")));
                }
                let a = self.amplitudes[l][c];
                if !(a.is_finite() && a >= 0.0) {
                    return Err(invalid(format!("frame {l} component {c}: amplitude {a}")));
                }
                if !self.phases[l][c].is_finite() {
                    return Err(Error::NonFinite("harmonic phases"));
                }
                let d = self.compensations[l][c];
                if !(d.abs() <= std::f64::consts::PI + 1e-12) {
                    return Err(Error::CompensationOutOfRange {
                        frame: l,
                        component: c,
                        value: d,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.grid.len()
    }

    /// Largest per-frame component count.
    pub fn max_components(&self) -> usize {
        self.frequencies.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Frequencies padded to `max_components()` columns. Missing components
    /// continue the frame's harmonic series (they carry zero amplitude).
    pub fn dense_frequencies(&self) -> Vec<Vec<f64>> {
        let k_max = self.max_components();
        self.frequencies
            .iter()
            .map(|row| {
                let spacing = row.first().copied().filter(|f| *f > 0.0).unwrap_or(UNVOICED_F0);
                (0..k_max)
                    .map(|k| row.get(k).copied().unwrap_or((k + 1) as f64 * spacing))
                    .collect()
            })
            .collect()
    }

    pub fn dense_amplitudes(&self) -> Vec<Vec<f64>> {
        pad(&self.amplitudes, self.max_components())
    }

    pub fn dense_compensations(&self) -> Vec<Vec<f64>> {
        pad(&self.compensations, self.max_components())
    }

    /// Build a set from measured frequencies, amplitudes and wrapped phases at
    /// the frame centers. Compensations are chosen so that the accumulated
    /// excitation phase plus the running compensation sum lands on the
    /// measured phase (mod 2 pi) at every frame.
    pub fn from_measurements(
        grid: FrameGrid,
        frequencies: Vec<Vec<f64>>,
        amplitudes: Vec<Vec<f64>>,
        measured_phases: &[Vec<f64>],
    ) -> Result<Self> {
        let n = grid.len();
        if measured_phases.len() != n || frequencies.len() != n || amplitudes.len() != n {
            return Err(Error::LengthMismatch {
                what: "measurement rows vs frames",
                left: measured_phases.len(),
                right: n,
            });
        }
        let mut set = Self {
            grid,
            compensations: frequencies.iter().map(|r| vec![0.0; r.len()]).collect(),
            phases: frequencies.iter().map(|r| vec![0.0; r.len()]).collect(),
            frequencies,
            amplitudes,
        };
        let dense = set.dense_frequencies();
        let excitation = excitation_phase(&dense, set.grid.centers())?;
        let k_max = set.max_components();
        let mut running = vec![0.0; k_max];
        for l in 0..n {
            for k in 0..set.frequencies[l].len() {
                let target = measured_phases[l][k] - excitation[l][k];
                let delta = wrap_phase(target - running[k]);
                running[k] += delta;
                set.compensations[l][k] = delta;
                set.phases[l][k] = excitation[l][k] + running[k];
            }
        }
        set.validate()?;
        Ok(set)
    }
}

fn pad(rows: &[Vec<f64>], k_max: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let mut r = row.clone();
            r.resize(k_max, 0.0);
            r
        })
        .collect()
}
