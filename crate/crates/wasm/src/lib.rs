//! WebAssembly bindings for the browser demo in `www/`.

pub mod ops;

use wasm_bindgen::prelude::*;

fn js(e: harmvoc::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `formants` holds (frequency, bandwidth) pairs in Hz. Returns magnitude
/// (dB), summed phase delay and wrapped phase delay, `points` values each.
#[wasm_bindgen(js_name = envelopeCurve)]
pub fn envelope_curve(formants: &[f64], sample_rate: u32, points: usize) -> Result<Vec<f64>, JsError> {
    ops::envelope_curve(formants, sample_rate, points).map_err(js)
}

#[wasm_bindgen(js_name = pitchShift)]
pub fn pitch_shift(
    formants: &[f64],
    f0: f64,
    rho: f64,
    beta: f64,
    duration: f64,
    sample_rate: u32,
) -> Result<Vec<f64>, JsError> {
    ops::pitch_shift(formants, f0, rho, beta, duration, sample_rate).map_err(js)
}

#[wasm_bindgen(js_name = glideSpectrogram)]
pub fn glide_spectrogram(
    f0_start: f64,
    f0_end: f64,
    rho: f64,
    frames: usize,
    bins: usize,
    max_hz: f64,
    width_hz: f64,
    sample_rate: u32,
) -> Result<Vec<f64>, JsError> {
    ops::glide_spectrogram(f0_start, f0_end, rho, frames, bins, max_hz, width_hz, sample_rate).map_err(js)
}
