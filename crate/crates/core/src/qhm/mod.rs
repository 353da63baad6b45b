//! Quasi-harmonic analysis.

mod adaptive;
mod analysis;
mod ls;
mod pitch;

use std::f64::consts::PI;

pub use adaptive::{reconstruction_error, refine_adaptive, AdaptiveMode, AdaptiveResult, MIN_IMPROVEMENT};
pub use analysis::{analyze, refine_f0_from_harmonics, Analysis, AnalysisConfig, FrameFlags};
pub use ls::{fit_with_basis, model_residual, qhm_ls_fit, Basis, QhmFrameParams, CONDITION_LIMIT, RIDGE_FACTOR};
pub use pitch::{detect_f0, PitchConfig, DEFAULT_VOICING_THRESHOLD};

use crate::error::{invalid, Result};

/// Below this modulus a complex amplitude has no defined phase and no
/// frequency correction.
pub const AMPLITUDE_FLOOR: f64 = 1e-7;

/// Per-component frequency offsets from the amplitude/slope pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCorrection {
    /// Hz; zero where undefined.
    pub eta: Vec<f64>,
    /// True where `|a_k|` was at or below the floor.
    pub undefined: Vec<bool>,
}

pub fn frequency_correction(params: &QhmFrameParams) -> FrequencyCorrection {
    let mut eta = Vec::with_capacity(params.n_components());
    let mut undefined = Vec::with_capacity(params.n_components());
    for (a, b) in params.amplitudes.iter().zip(&params.slopes) {
        if a.norm() <= AMPLITUDE_FLOOR {
            eta.push(0.0);
            undefined.push(true);
        } else {
            eta.push((a.re * b.im - a.im * b.re) / (2.0 * PI * a.norm_sqr()));
            undefined.push(false);
        }
    }
    FrequencyCorrection { eta, undefined }
}

/// `(|a_k|, arg a_k)` with the phase in (-pi, pi], zero below the floor.
pub fn framewise_amp_phase(params: &QhmFrameParams) -> (Vec<f64>, Vec<f64>) {
    params
        .amplitudes
        .iter()
        .map(|a| {
            let amp = a.norm();
            if amp <= AMPLITUDE_FLOOR {
                (amp, 0.0)
            } else {
                let p = a.im.atan2(a.re);
                (amp, if p <= -PI { PI } else { p })
            }
        })
        .unzip()
}

/// Phase over a frame from instantaneous frequencies sampled every `dt`
/// seconds, anchored at `center` where it equals `center_phase`
/// (cumulative trapezoid in both directions).
pub fn integrate_phase(freqs: &[f64], center: usize, dt: f64, center_phase: f64) -> Result<Vec<f64>> {
    if center >= freqs.len() {
        return Err(invalid("phase anchor outside the frequency samples"));
    }
    if freqs.iter().any(|f| !f.is_finite()) {
        return Err(crate::Error::NonFinite("instantaneous frequency"));
    }
    let mut phase = vec![0.0; freqs.len()];
    phase[center] = center_phase;
    for n in center + 1..freqs.len() {
        phase[n] = phase[n - 1] + PI * (freqs[n - 1] + freqs[n]) * dt;
    }
    for n in (0..center).rev() {
        phase[n] = phase[n + 1] - PI * (freqs[n] + freqs[n + 1]) * dt;
    }
    Ok(phase)
}

/// Which interval the sine correction term of the smoothed phase is laid
/// over.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SmoothingInterval {
    /// `sin(pi (u - t_l) / (t_{l+1} - t_l))`; the endpoint lands exactly on
    /// the unwrapped target.
    #[default]
    Current,
    /// `sin(pi (u - t_{l-1}) / (t_l - t_{l-1}))` taken literally, with the
    /// previous interval length supplied by the caller.
    Previous { previous_len: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPhase {
    /// Phase at every sample from `t_l` to `t_{l+1}` inclusive.
    pub phase: Vec<f64>,
    pub z: f64,
    pub m: i64,
}

/// Phase from `t_l` to `t_{l+1}`: frequency integral plus a half-sine
/// frequency bump sized so the end phase meets `next_target + 2 pi M`.
pub fn smooth_phase(
    start_phase: f64,
    next_target: f64,
    freqs: &[f64],
    dt: f64,
    interval: SmoothingInterval,
) -> Result<SmoothedPhase> {
    if freqs.len() < 2 {
        return Err(invalid("need at least two frequency samples per frame"));
    }
    if !next_target.is_finite() || !start_phase.is_finite() {
        return Err(crate::Error::NonFinite("target phase"));
    }
    let plain = integrate_phase(freqs, 0, dt, start_phase)?;
    let span = dt * (freqs.len() - 1) as f64;
    let end = *plain.last().unwrap();
    let m = ((end - next_target) / (2.0 * PI)).round();
    let z = PI * (next_target + 2.0 * PI * m - end) / (2.0 * span);
    let phase = plain
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let u = n as f64 * dt;
            let bump = match interval {
                SmoothingInterval::Current => z * span / PI * (1.0 - (PI * u / span).cos()),
                SmoothingInterval::Previous { previous_len } => {
                    let d = previous_len;
                    z * d / PI * ((PI * d / d).cos() - (PI * (u + d) / d).cos())
                }
            };
            p + bump
        })
        .collect();
    Ok(SmoothedPhase {
        phase,
        z,
        m: m as i64,
    })
}
