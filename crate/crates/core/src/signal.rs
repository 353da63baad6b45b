//! Signal containers, analysis windows, frame grids and the pseudo-spectrogram.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl SignalBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("signal samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis window shape. `Gaussian` carries the standard deviation relative
/// to the half length of the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "sigma", rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
    Gaussian(f64),
}

impl Default for WindowKind {
    fn default() -> Self {
        WindowKind::Hann
    }
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "hann" | "hanning" => Ok(WindowKind::Hann),
            "hamming" => Ok(WindowKind::Hamming),
            _ => {
                if let Some(rest) = lower.strip_prefix("gaussian") {
                    let sigma = rest
                        .trim_matches(|c| c == '(' || c == ')' || c == ':' || c == '=')
                        .parse::<f64>()
                        .map_err(|_| invalid(format!("bad gaussian window spec '{s}'")))?;
                    if sigma > 0.0 {
                        return Ok(WindowKind::Gaussian(sigma));
                    }
                }
                Err(invalid(format!("unknown window kind '{s}'")))
            }
        }
    }
}

/// Symmetric window of `len` samples (first and last sample included).
pub fn make_window(kind: WindowKind, len: usize) -> Result<Vec<f64>> {
    if len < 3 {
        return Err(invalid(format!("window length {len} < 3")));
    }
    let m = (len - 1) as f64;
    let mut w: Vec<f64> = (0..len)
        .map(|n| {
            let n = n as f64;
            match kind {
                WindowKind::Hann => 0.5 - 0.5 * (2.0 * PI * n / m).cos(),
                WindowKind::Hamming => 0.54 - 0.46 * (2.0 * PI * n / m).cos(),
                WindowKind::Gaussian(sigma) => {
                    let x = (n - m / 2.0) / (sigma * m / 2.0);
                    (-0.5 * x * x).exp()
                }
            }
        })
        .collect();
    // mirror so both halves are bit-identical
    for n in 0..len / 2 {
        w[len - 1 - n] = w[n];
    }
    Ok(w)
}

/// Equally spaced frame centers plus the window used around each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    centers: Vec<f64>,
    frame_shift: f64,
    half_window: f64,
    window: WindowKind,
    sample_rate: u32,
}

impl FrameGrid {
    pub fn new(
        centers: Vec<f64>,
        frame_shift: f64,
        half_window: f64,
        window: WindowKind,
        sample_rate: u32,
    ) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if !(frame_shift > 0.0 && frame_shift.is_finite()) {
            return Err(invalid("frame shift must be positive"));
        }
        if 2.0 * half_window * sample_rate as f64 + 1e-9 < 3.0 {
            return Err(invalid("window spans fewer than 3 samples"));
        }
        let tol = 1.0 / sample_rate as f64 + 1e-12;
        for (l, pair) in centers.windows(2).enumerate() {
            let d = pair[1] - pair[0];
            if d <= 0.0 {
                return Err(invalid(format!("frame centers not increasing at {l}")));
            }
            if (d - frame_shift).abs() > tol {
                return Err(invalid(format!("frame {l} spacing {d} != shift {frame_shift}")));
            }
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("frame centers"));
        }
        Ok(Self {
            centers,
            frame_shift,
            half_window,
            window,
            sample_rate,
        })
    }

    /// Frames every `frame_shift` seconds (rounded to whole samples) starting
    /// at t = 0 and covering `len_samples`.
    pub fn for_signal(
        len_samples: usize,
        sample_rate: u32,
        frame_shift: f64,
        half_window: f64,
        window: WindowKind,
    ) -> Result<Self> {
        let hop = (frame_shift * sample_rate as f64).round() as usize;
        if hop == 0 {
            return Err(invalid("frame shift shorter than one sample"));
        }
        let n_frames = if len_samples == 0 {
            0
        } else {
            (len_samples - 1) / hop + 1
        };
        let fs = sample_rate as f64;
        let centers = (0..n_frames).map(|l| (l * hop) as f64 / fs).collect();
        Self::new(centers, hop as f64 / fs, half_window, window, sample_rate)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    pub fn half_window(&self) -> f64 {
        self.half_window
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Half window length in whole samples.
    pub fn half_window_samples(&self) -> usize {
        (self.half_window * self.sample_rate as f64).round().max(1.0) as usize
    }

    /// Sample index nearest to the center of frame `l`.
    pub fn center_sample(&self, l: usize) -> i64 {
        (self.centers[l] * self.sample_rate as f64).round() as i64
    }

    /// Window weights, `2 * half_window_samples() + 1` long.
    pub fn window_weights(&self) -> Vec<f64> {
        make_window(self.window, 2 * self.half_window_samples() + 1)
            .expect("grid guarantees at least 3 window samples")
    }

    /// Cut frame `l` out of `signal`. Samples outside the signal are zero and
    /// carry zero weight.
    pub fn frame(&self, signal: &[f64], l: usize, window: &[f64]) -> Frame {
        let half = self.half_window_samples() as i64;
        let center = self.center_sample(l);
        let fs = self.sample_rate as f64;
        let n = (2 * half + 1) as usize;
        let mut samples = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        for (i, m) in (-half..=half).enumerate() {
            let idx = center + m;
            times.push(m as f64 / fs);
            if idx >= 0 && (idx as usize) < signal.len() {
                samples.push(signal[idx as usize]);
                weights.push(window[i]);
            } else {
                samples.push(0.0);
                weights.push(0.0);
            }
        }
        Frame {
            index: l,
            samples,
            weights,
            times,
        }
    }
}

/// One analysis frame: samples, window weights and times relative to the
/// frame center.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub samples: Vec<f64>,
    pub weights: Vec<f64>,
    pub times: Vec<f64>,
}

impl Frame {
    /// Build a frame from samples centered at t = 0.
    pub fn centered(index: usize, samples: Vec<f64>, window: &[f64], sample_rate: f64) -> Result<Self> {
        if samples.len() != window.len() {
            return Err(Error::LengthMismatch {
                what: "frame samples vs window",
                left: samples.len(),
                right: window.len(),
            });
        }
        let half = (samples.len() as f64 - 1.0) / 2.0;
        let times = (0..samples.len())
            .map(|n| (n as f64 - half) / sample_rate)
            .collect();
        Ok(Self {
            index,
            samples,
            weights: window.to_vec(),
            times,
        })
    }

    /// Number of samples carrying nonzero weight.
    pub fn effective_len(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    /// True if weights and times are mirror-symmetric about the center.
    pub fn is_symmetric(&self) -> bool {
        let n = self.weights.len();
        n % 2 == 1
            && (0..n / 2).all(|i| {
                self.weights[i] == self.weights[n - 1 - i]
                    && (self.times[i] + self.times[n - 1 - i]).abs() < 1e-12
            })
    }
}

/// Real matrix indexed by (frame, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<Vec<f64>>,
    /// Bin frequencies in rad/s.
    pub bin_frequencies: Vec<f64>,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.len()
    }

    pub fn n_bins(&self) -> usize {
        self.bin_frequencies.len()
    }
}

/// Unit-amplitude Gaussian bumps at every component frequency and its mirror
/// image, evaluated at `bin_frequencies` (rad/s) for each frame.
pub fn pseudo_stft(frequencies: &[Vec<f64>], sigma: f64, bin_frequencies: &[f64]) -> Result<Spectrogram> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma must be positive"));
    }
    let s2 = sigma * sigma;
    let values = frequencies
        .iter()
        .map(|freqs| {
            bin_frequencies
                .iter()
                .map(|&omega| {
                    freqs
                        .iter()
                        .map(|&f| {
                            let w = 2.0 * PI * f;
                            let pos = omega - w;
                            let neg = omega + w;
                            (-s2 * pos * pos / 2.0).exp() + (-s2 * neg * neg / 2.0).exp()
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(Spectrogram {
        values,
        bin_frequencies: bin_frequencies.to_vec(),
    })
}
