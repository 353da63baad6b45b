//! Objective measures: voicing errors, log-f0 RMSE, mel-cepstral distortion,
//! SNR and real-time factors.

use std::f64::consts::{LN_10, PI};
use std::time::Instant;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::harmonics::F0Track;
use crate::signal::{FrameGrid, SignalBuffer};

pub const SNR_CAP_DB: f64 = 120.0;
pub const MEL_FILTERS: usize = 40;
pub const MEL_COEFFS: usize = 24;
pub const LOG_FLOOR: f64 = 1e-10;
/// Timed runs per RTF measurement (after one warmup run).
pub const RTF_RUNS: usize = 5;

fn same_len(a: usize, b: usize, what: &'static str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, left: a, right: b })
    }
}

/// Percentage of frames whose voicing decisions differ.
pub fn vuv_rate(generated: &F0Track, reference: &F0Track) -> Result<f64> {
    same_len(generated.len(), reference.len(), "f0 tracks")?;
    if generated.is_empty() {
        return Err(Error::Undefined("voicing error on empty tracks"));
    }
    let wrong = generated
        .values
        .iter()
        .zip(&reference.values)
        .filter(|(g, r)| (**g > 0.0) != (**r > 0.0))
        .count();
    Ok(100.0 * wrong as f64 / generated.len() as f64)
}

/// RMS of `ln f0_gen - ln(rho f0_ref)` over frames voiced in both tracks;
/// `None` when no frame qualifies.
pub fn f0_rmse(generated: &F0Track, reference: &F0Track, rhos: &[f64]) -> Result<Option<f64>> {
    same_len(generated.len(), reference.len(), "f0 tracks")?;
    same_len(rhos.len(), reference.len(), "rho schedule vs frames")?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((g, r), rho) in generated.values.iter().zip(&reference.values).zip(rhos) {
        if *g > 0.0 && *r > 0.0 {
            let d = g.ln() - (rho * r).ln();
            sum += d * d;
            count += 1;
        }
    }
    Ok((count > 0).then(|| (sum / count as f64).sqrt()))
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filter weights `[filter][bin]` over bins `0..=nfft/2`.
fn mel_filterbank(n_filters: usize, nfft: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    let n_bins = nfft / 2 + 1;
    (0..n_filters)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..n_bins)
                .map(|b| {
                    let f = b as f64 * sample_rate / nfft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II coefficient `d` of `x`.
fn dct2(x: &[f64], d: usize) -> f64 {
    let n = x.len() as f64;
    let scale = if d == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    scale
        * x.iter()
            .enumerate()
            .map(|(i, v)| v * (PI * d as f64 * (i as f64 + 0.5) / n).cos())
            .sum::<f64>()
}

/// Mel cepstra `d = 1..=n_coeffs` for every frame of `grid`: windowed DFT
/// magnitude, 40 HTK triangular filters from 0 Hz to Nyquist, log with a
/// floor, orthonormal DCT-II.
pub fn mel_cepstrum(buffer: &SignalBuffer, grid: &FrameGrid, n_coeffs: usize) -> Result<Vec<Vec<f64>>> {
    if buffer.sample_rate() != grid.sample_rate() {
        return Err(invalid("buffer and grid sample rates differ"));
    }
    if n_coeffs == 0 || n_coeffs >= MEL_FILTERS {
        return Err(invalid(format!("need 1..{} cepstral coefficients", MEL_FILTERS - 1)));
    }
    let window = grid.window_weights();
    let nfft = window.len().next_power_of_two();
    let fs = buffer.sample_rate() as f64;
    let bank = mel_filterbank(MEL_FILTERS, nfft, fs);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let x = buffer.samples();
    let frames = (0..grid.len())
        .into_par_iter()
        .map(|l| {
            let frame = grid.frame(x, l, &window);
            let mut spec: Vec<Complex<f64>> = frame
                .samples
                .iter()
                .zip(&frame.weights)
                .map(|(s, w)| Complex::new(s * w, 0.0))
                .collect();
            spec.resize(nfft, Complex::new(0.0, 0.0));
            fft.process(&mut spec);
            let mags: Vec<f64> = spec[..nfft / 2 + 1].iter().map(|c| c.norm()).collect();
            let log_e: Vec<f64> = bank
                .iter()
                .map(|w| w.iter().zip(&mags).map(|(a, b)| a * b).sum::<f64>().max(LOG_FLOOR).ln())
                .collect();
            (1..=n_coeffs).map(|d| dct2(&log_e, d)).collect()
        })
        .collect();
    Ok(frames)
}

const MCD_FACTOR: f64 = 10.0 * std::f64::consts::SQRT_2 / LN_10;

/// Per-frame distortion in dB.
pub fn frame_mcd(generated: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Vec<f64>> {
    same_len(generated.len(), reference.len(), "cepstral frames")?;
    generated
        .iter()
        .zip(reference)
        .map(|(g, r)| {
            same_len(g.len(), r.len(), "cepstral dimension")?;
            Ok(MCD_FACTOR * g.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        })
        .collect()
}

/// Mean mel-cepstral distortion (dB) over index-paired frames.
pub fn mcd(generated: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    let per = frame_mcd(generated, reference)?;
    if per.is_empty() {
        return Err(Error::Undefined("distortion over zero frames"));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// `10 log10(sum ref^2 / sum (ref - gen)^2)`, capped at 120 dB.
pub fn snr(generated: &SignalBuffer, reference: &SignalBuffer) -> Result<f64> {
    same_len(generated.len(), reference.len(), "signals")?;
    snr_samples(generated.samples(), reference.samples())
}

pub fn snr_samples(generated: &[f64], reference: &[f64]) -> Result<f64> {
    same_len(generated.len(), reference.len(), "signals")?;
    let energy: f64 = reference.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::Undefined("SNR against an all-zero reference"));
    }
    let err: f64 = reference.iter().zip(generated).map(|(r, g)| (r - g).powi(2)).sum();
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (energy / err).log10()).min(SNR_CAP_DB))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RtfMeasurement {
    pub median: f64,
    /// Every timed run (ratio to audio duration).
    pub runs: Vec<f64>,
}

/// Wall-clock time of `work` relative to `audio_seconds`: one warmup, then
/// the median of `runs` timed calls.
pub fn rtf<F>(mut work: F, audio_seconds: f64, runs: usize) -> Result<RtfMeasurement>
where
    F: FnMut() -> Result<()>,
{
    if !(audio_seconds > 0.0) {
        return Err(invalid("audio duration must be positive"));
    }
    if runs == 0 {
        return Err(invalid("need at least one timed run"));
    }
    work()?;
    let mut ratios = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        work()?;
        ratios.push(start.elapsed().as_secs_f64() / audio_seconds);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if runs % 2 == 1 {
        sorted[runs / 2]
    } else {
        0.5 * (sorted[runs / 2 - 1] + sorted[runs / 2])
    };
    Ok(RtfMeasurement { median, runs: ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct MetricReport {
    /// Percent.
    pub vuv_rate: f64,
    /// log-Hz; `None` when no frame is voiced in both signals.
    pub f0_rmse: Option<f64>,
    /// dB.
    pub mcd: f64,
    /// dB; only for equal-length signals.
    pub snr: Option<f64>,
    pub rtf_analysis: Option<f64>,
    pub rtf_synthesis: Option<f64>,
    pub rtf_overall: Option<f64>,
}

impl MetricReport {
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let rows = [
            ("V/UV error (%)", format!("{:.4}", self.vuv_rate)),
            ("log-f0 RMSE (log-Hz)", opt(self.f0_rmse)),
            ("MCD (dB)", format!("{:.4}", self.mcd)),
            ("SNR (dB)", opt(self.snr)),
            ("RTF analysis", opt(self.rtf_analysis)),
            ("RTF synthesis", opt(self.rtf_synthesis)),
            ("RTF overall", opt(self.rtf_overall)),
        ];
        rows.iter()
            .map(|(k, v)| format!("{k:<22} {v:>12}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::WindowKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize) -> FrameGrid {
        FrameGrid::new((0..n).map(|l| l as f64 * 0.005).collect(), 0.005, 0.01, WindowKind::Hann, 24000).unwrap()
    }

    fn track(values: Vec<f64>) -> F0Track {
        F0Track::new(grid(values.len()), values).unwrap()
    }

    #[test]
    fn vuv_cases() {
        let a = track(vec![100.0, 0.0, 120.0, 0.0]);
        let not_a = track(vec![0.0, 100.0, 0.0, 90.0]);
        assert_eq!(vuv_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(vuv_rate(&a, &not_a).unwrap(), 100.0);
        let mut v = vec![100.0; 10];
        let r = track(v.clone());
        v[3] = 0.0;
        assert_eq!(vuv_rate(&track(v), &r).unwrap(), 10.0);
        assert!(vuv_rate(&a, &track(vec![1.0])).is_err());
    }

    #[test]
    fn rmse_cases() {
        let r = track(vec![100.0, 150.0, 0.0, 210.0]);
        assert_eq!(f0_rmse(&r, &r, &[1.0; 4]).unwrap(), Some(0.0));
        let doubled = track(r.values.iter().map(|v| 2.0 * v).collect());
        assert_eq!(f0_rmse(&doubled, &r, &[2.0; 4]).unwrap(), Some(0.0));
        let up = track(r.values.iter().map(|v| v * 0.1f64.exp()).collect());
        assert_abs_diff_eq!(f0_rmse(&up, &r, &[1.0; 4]).unwrap().unwrap(), 0.1, epsilon = 1e-12);
        let silent = track(vec![0.0; 4]);
        assert_eq!(f0_rmse(&silent, &r, &[1.0; 4]).unwrap(), None);
    }

    #[test]
    fn mcd_closed_form() {
        let a = vec![vec![0.0; 24]];
        let mut b = a.clone();
        b[0][5] = 0.37;
        assert_eq!(mcd(&a, &a).unwrap(), 0.0);
        let expected = 10.0 * 2f64.sqrt() / 10f64.ln() * 0.37;
        assert!((mcd(&a, &b).unwrap() - expected).abs() <= 1e-9);
        assert!(mcd(&a, &[vec![0.0; 23]]).is_err());
    }

    #[test]
    fn snr_cases() {
        let r = SignalBuffer::new(vec![0.5, -0.25, 0.75, 0.1], 8000).unwrap();
        assert_eq!(snr(&r, &r).unwrap(), SNR_CAP_DB);
        let z = SignalBuffer::zeros(4, 8000).unwrap();
        assert_abs_diff_eq!(snr(&z, &r).unwrap(), 0.0, epsilon = 1e-12);
        let g = SignalBuffer::new(r.samples().iter().map(|v| v * 1.01).collect(), 8000).unwrap();
        assert_abs_diff_eq!(snr(&g, &r).unwrap(), 40.0, epsilon = 1e-9);
        assert!(snr(&r, &z).is_err());
    }

    fn noise(seed: u64, n: usize, scale: f64) -> SignalBuffer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        SignalBuffer::new((0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect(), 24000).unwrap()
    }

    #[test]
    fn cepstrum_scale_invariance() {
        let x = noise(4, 4800, 0.3);
        let y = SignalBuffer::new(x.samples().iter().map(|v| 2.5 * v).collect(), 24000).unwrap();
        let g = FrameGrid::for_signal(x.len(), 24000, 0.005, 0.01, WindowKind::Hann).unwrap();
        let a = mel_cepstrum(&x, &g, 24).unwrap();
        let b = mel_cepstrum(&y, &g, 24).unwrap();
        assert_eq!(a, mel_cepstrum(&x, &g, 24).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            for (va, vb) in ra.iter().zip(rb) {
                assert!((va - vb).abs() <= 1e-9);
            }
        }
    }

    /// Second implementation: direct DFT, filter weights from mel-domain
    /// distances, DCT via an explicit basis matrix.
    fn reference_cepstrum(x: &[f64], center: usize, half: usize, fs: f64) -> Vec<f64> {
        let len = 2 * half + 1;
        let nfft = len.next_power_of_two();
        let frame: Vec<f64> = (0..len)
            .map(|i| {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos();
                let idx = center as i64 + i as i64 - half as i64;
                if idx >= 0 && (idx as usize) < x.len() { w * x[idx as usize] } else { 0.0 }
            })
            .collect();
        let mags: Vec<f64> = (0..=nfft / 2)
            .map(|b| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (b * n) as f64 / nfft as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                re.hypot(im)
            })
            .collect();
        let mel = |f: f64| 1127.0 * (1.0 + f / 700.0).ln();
        let top = mel(fs / 2.0);
        let step = top / 41.0;
        let energies: Vec<f64> = (0..40)
            .map(|j| {
                let c = (j + 1) as f64 * step;
                let e: f64 = mags
                    .iter()
                    .enumerate()
                    .map(|(b, m)| {
                        let f = b as f64 * fs / nfft as f64;
                        // triangle in Hz between the mel edges
                        let lo = 700.0 * (((c - step) / 1127.0).exp() - 1.0);
                        let mid = 700.0 * ((c / 1127.0).exp() - 1.0);
                        let hi = 700.0 * (((c + step) / 1127.0).exp() - 1.0);
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        w * m
                    })
                    .sum();
                e.max(1e-10).ln()
            })
            .collect();
        (1..=24)
            .map(|d| {
                let basis: Vec<f64> = (0..40)
                    .map(|i| (2.0f64 / 40.0).sqrt() * (PI / 40.0 * (i as f64 + 0.5) * d as f64).cos())
                    .collect();
                basis.iter().zip(&energies).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    #[test]
    fn cepstrum_matches_reference_on_noise() {
        let x = noise(99, 2400, 0.5);
        let g = FrameGrid::for_signal(x.len(), 24000, 0.005, 0.01, WindowKind::Hann).unwrap();
        let ours = mel_cepstrum(&x, &g, 24).unwrap();
        for l in [0, 3, 9] {
            let r = reference_cepstrum(x.samples(), g.center_sample(l) as usize, 240, 24000.0);
            for (a, b) in ours[l].iter().zip(&r) {
                assert!((a - b).abs() <= 1e-6, "frame {l}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rtf_of_a_sleep() {
        let m = rtf(
            || {
                std::thread::sleep(std::time::Duration::from_millis(50));
                Ok(())
            },
            0.1,
            3,
        )
        .unwrap();
        assert!((m.median - 0.5).abs() < 0.2, "{m:?}");
        assert!(rtf(|| Ok(()), 0.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn mcd_is_symmetric(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<Vec<f64>> = (0..5).map(|_| (0..24).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let b: Vec<Vec<f64>> = (0..5).map(|_| (0..24).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            prop_assert_eq!(mcd(&a, &b).unwrap(), mcd(&b, &a).unwrap());
        }
    }
}
