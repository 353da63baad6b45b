//! Plain-Rust implementations behind the JavaScript exports.

use std::f64::consts::PI;

use harmvoc::arma::{cascade_response, sample_harmonics, ArmaCascade, ArmaFrame, ArmaOrders, ArmaSection};
use harmvoc::error::{Error, Result};
use harmvoc::harmonics::{ComponentRule, F0Track};
use harmvoc::modify::{modify, scaled_freqs, ScaleSchedule};
use harmvoc::signal::{pseudo_stft, FrameGrid, WindowKind};

pub const FRAME_SHIFT: f64 = 0.005;

fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(msg.into())
}

/// One resonant pole pair per `(frequency, bandwidth)` pair in Hz.
pub fn formant_frame(formants: &[f64], sample_rate: u32) -> Result<(ArmaOrders, ArmaFrame)> {
    if formants.is_empty() || formants.len() % 2 != 0 {
        return Err(invalid("formants must be (frequency, bandwidth) pairs"));
    }
    let fs = sample_rate as f64;
    let mut sections = Vec::new();
    for pair in formants.chunks(2) {
        let (f, bw) = (pair[0], pair[1]);
        if !(f > 0.0 && f < fs / 2.0 && bw > 0.0) {
            return Err(invalid("formant outside (0, Nyquist) or bandwidth not positive"));
        }
        let r = (-PI * bw / fs).exp();
        let theta = 2.0 * PI * f / fs;
        sections.push(ArmaSection::new(vec![-2.0 * r * theta.cos(), r * r], Vec::new()));
    }
    let n = sections.len();
    Ok((ArmaOrders::new(2 * n, 0, n)?, ArmaFrame { gain: 1.0, sections }))
}

/// Three rows of `points` values on `[0, Nyquist)`: magnitude in dB, the
/// summed per-section phase delay and the same delay wrapped to one turn.
pub fn envelope_curve(formants: &[f64], sample_rate: u32, points: usize) -> Result<Vec<f64>> {
    let (_, frame) = formant_frame(formants, sample_rate)?;
    let fs = sample_rate as f64;
    let freqs: Vec<f64> = (0..points).map(|i| i as f64 * fs / 2.0 / points as f64).collect();
    let s = sample_harmonics(&frame, &freqs, fs)?;
    let mut out: Vec<f64> = s.magnitudes.iter().map(|m| 20.0 * m.max(1e-12).log10()).collect();
    out.extend_from_slice(&s.delays);
    for f in &freqs {
        out.push(cascade_response(&frame, 2.0 * PI * f / fs)?.arg());
    }
    Ok(out)
}

/// Constant-f0 vowel through the formant envelope, rendered with pitch factor
/// `rho` and time factor `beta`.
pub fn pitch_shift(formants: &[f64], f0: f64, rho: f64, beta: f64, duration: f64, sample_rate: u32) -> Result<Vec<f64>> {
    if !(duration > 0.0 && duration <= 10.0) {
        return Err(invalid("duration must be in (0, 10] s"));
    }
    let (orders, mut frame) = formant_frame(formants, sample_rate)?;
    let fs = sample_rate as f64;
    let rule = ComponentRule::default();
    let total: f64 = 2.0 * sample_harmonics(&frame, &rule.frequencies(f0, fs), fs)?.magnitudes.iter().sum::<f64>();
    if !(total > 0.0) {
        return Err(invalid("f0 leaves no harmonic below Nyquist"));
    }
    frame.gain = 0.9 / total;
    let n = (duration * fs).round() as usize;
    let grid = FrameGrid::for_signal(n, sample_rate, FRAME_SHIFT, 0.01, WindowKind::Hann)?;
    let track = F0Track::new(grid.clone(), vec![f0; grid.len()])?;
    let cascade = ArmaCascade::constant(grid, orders, frame)?;
    let schedule = ScaleSchedule::constant(&track, beta, rho)?;
    Ok(modify(&cascade, &track, &schedule, &rule)?.buffer.into_samples())
}

/// Gaussian-bump spectrogram of the harmonic grid of an f0 glide from
/// `f0_start` to `f0_end`, shifted by `rho`. Row-major `frames x bins`, bins
/// spread over `[0, max_hz]`.
pub fn glide_spectrogram(
    f0_start: f64,
    f0_end: f64,
    rho: f64,
    frames: usize,
    bins: usize,
    max_hz: f64,
    width_hz: f64,
    sample_rate: u32,
) -> Result<Vec<f64>> {
    if frames < 2 || bins < 2 || !(width_hz > 0.0) {
        return Err(invalid("need at least two frames and bins and a positive width"));
    }
    let centers = (0..frames).map(|l| l as f64 * FRAME_SHIFT).collect();
    let grid = FrameGrid::new(centers, FRAME_SHIFT, 0.01, WindowKind::Hann, sample_rate)?;
    let values = (0..frames)
        .map(|l| f0_start + (f0_end - f0_start) * l as f64 / (frames - 1) as f64)
        .collect();
    let track = F0Track::new(grid, values)?;
    let scaled = scaled_freqs(&track, &vec![rho; frames], &ComponentRule::default())?;
    let freqs: Vec<Vec<f64>> = scaled
        .voiced
        .iter()
        .zip(&scaled.voiced_counts)
        .map(|(row, &k)| row[..k].to_vec())
        .collect();
    let omegas: Vec<f64> = (0..bins).map(|b| 2.0 * PI * max_hz * b as f64 / (bins - 1) as f64).collect();
    let spec = pseudo_stft(&freqs, 1.0 / (2.0 * PI * width_hz), &omegas)?;
    Ok(spec.values.concat())
}
