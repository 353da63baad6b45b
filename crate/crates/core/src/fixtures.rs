//! Deterministic test signals with exact ground truth.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::arma::{sample_harmonics, ArmaFrame, ArmaOrders, ArmaSection};
use crate::error::{invalid, Result};
use crate::harmonics::ComponentRule;
use crate::signal::SignalBuffer;

/// Generator parameters. Amplitudes are cosine peak amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FixtureKind {
    /// `a cos(2 pi f t + phase)`
    Tone { frequency: f64, amplitude: f64, phase: f64 },
    /// `sum_k a_k cos(2 pi k f0 t + phase_k)`
    Multisine { f0: f64, amplitudes: Vec<f64>, phases: Vec<f64> },
    /// Harmonics of a linear sweep from `f_start` to `f_end` over the whole
    /// duration, all starting in cosine phase.
    Chirp { f_start: f64, f_end: f64, amplitudes: Vec<f64> },
    /// `a (1 + depth cos(2 pi rate t)) cos(2 pi carrier t)`
    Am { carrier: f64, amplitude: f64, depth: f64, rate: f64 },
    /// Constant-f0 harmonics shaped by an ARMA envelope:
    /// `sum_k 2 |H(k f0)| cos(2 pi k f0 t + arg H(k f0))` for every k the
    /// component rule admits.
    Vowel { f0: f64, orders: ArmaOrders, envelope: ArmaFrame, guard: f64 },
    /// Uniform white noise in `[-amplitude, amplitude)`.
    Noise { amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub sample_rate: u32,
    /// Seconds.
    pub duration: f64,
    #[serde(flatten)]
    pub kind: FixtureKind,
}

/// One stationary sinusoid of the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Sidecar written next to a generated fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    #[serde(flatten)]
    pub spec: FixtureSpec,
    pub samples: usize,
    /// Present for stationary sums of sinusoids.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub components: Option<Vec<Component>>,
}

/// Four-section formant envelope (orders 8,8,4) resembling an open vowel.
pub fn vowel_envelope(sample_rate: u32) -> (ArmaOrders, ArmaFrame) {
    let fs = sample_rate as f64;
    let formants = [(730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0), (3400.0, 250.0)];
    let sections = formants
        .iter()
        .enumerate()
        .map(|(j, &(f, bw))| {
            let r = (-PI * bw / fs).exp();
            let theta = (2.0 * PI * f / fs).min(PI);
            let zr = 0.3;
            let zt = PI * (j + 1) as f64 / 5.0;
            ArmaSection::new(vec![-2.0 * r * theta.cos(), r * r], vec![-2.0 * zr * zt.cos(), zr * zr])
        })
        .collect();
    let orders = ArmaOrders { p: 8, q: 8, r: 4 };
    (orders, ArmaFrame { gain: 1.0, sections })
}

impl FixtureSpec {
    pub fn tone(frequency: f64, duration: f64, sample_rate: u32) -> Self {
        Self { sample_rate, duration, kind: FixtureKind::Tone { frequency, amplitude: 0.5, phase: 0.0 } }
    }

    /// `k` harmonics of `f0` with amplitudes `0.3 / k` and zero phases (peak
    /// below 0.9 up to k = 10).
    pub fn multisine(f0: f64, k: usize, duration: f64, sample_rate: u32) -> Self {
        let amplitudes = (1..=k).map(|i| 0.3 / i as f64).collect();
        Self { sample_rate, duration, kind: FixtureKind::Multisine { f0, amplitudes, phases: vec![0.0; k] } }
    }

    /// Vowel on the default envelope, gain set so the summed cosine
    /// amplitudes stay below 0.9.
    pub fn vowel(f0: f64, duration: f64, sample_rate: u32) -> Result<Self> {
        let (orders, mut envelope) = vowel_envelope(sample_rate);
        let rule = ComponentRule::default();
        let fs = sample_rate as f64;
        let total: f64 = 2.0 * sample_harmonics(&envelope, &rule.frequencies(f0, fs), fs)?.magnitudes.iter().sum::<f64>();
        envelope.gain = 0.9 / total;
        Ok(Self { sample_rate, duration, kind: FixtureKind::Vowel { f0, orders, envelope, guard: rule.guard } })
    }

    fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("fixture needs a positive sample rate and duration"));
        }
        let nyq = self.sample_rate as f64 / 2.0;
        let below = |f: f64| f > 0.0 && f < nyq;
        let ok = match &self.kind {
            FixtureKind::Tone { frequency, .. } => below(*frequency),
            FixtureKind::Multisine { f0, amplitudes, phases } => {
                amplitudes.len() == phases.len() && below(*f0 * amplitudes.len().max(1) as f64)
            }
            FixtureKind::Chirp { f_start, f_end, amplitudes } => {
                let top = f_start.max(*f_end) * amplitudes.len().max(1) as f64;
                below(*f_start) && below(*f_end) && below(top)
            }
            FixtureKind::Am { carrier, depth, rate, .. } => below(*carrier) && *depth >= 0.0 && *rate >= 0.0,
            FixtureKind::Vowel { f0, orders, envelope, guard } => below(*f0) && *guard >= 0.0 && envelope.check(*orders).is_ok(),
            FixtureKind::Noise { amplitude, .. } => *amplitude >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid fixture parameters: {:?}", self.kind)))
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    fn components(&self) -> Result<Option<Vec<Component>>> {
        let fs = self.sample_rate as f64;
        Ok(match &self.kind {
            FixtureKind::Tone { frequency, amplitude, phase } => {
                Some(vec![Component { frequency: *frequency, amplitude: *amplitude, phase: *phase }])
            }
            FixtureKind::Multisine { f0, amplitudes, phases } => Some(
                amplitudes
                    .iter()
                    .zip(phases)
                    .enumerate()
                    .map(|(k, (a, p))| Component { frequency: (k + 1) as f64 * f0, amplitude: *a, phase: *p })
                    .collect(),
            ),
            FixtureKind::Vowel { f0, envelope, guard, .. } => {
                let rule = ComponentRule { guard: *guard, ..ComponentRule::default() };
                let freqs = rule.frequencies(*f0, fs);
                let env = sample_harmonics(envelope, &freqs, fs)?;
                Some(
                    freqs
                        .iter()
                        .zip(env.magnitudes.iter().zip(&env.delays))
                        .map(|(f, (m, d))| Component { frequency: *f, amplitude: 2.0 * m, phase: *d })
                        .collect(),
                )
            }
            _ => None,
        })
    }

    pub fn generate(&self) -> Result<(SignalBuffer, FixtureTruth)> {
        self.validate()?;
        let n = self.n_samples();
        let fs = self.sample_rate as f64;
        let components = self.components()?;
        let samples: Vec<f64> = match (&self.kind, &components) {
            (FixtureKind::Noise { amplitude, seed }, _) => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                (0..n).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect()
            }
            (FixtureKind::Chirp { f_start, f_end, amplitudes }, _) => {
                let rate = (f_end - f_start) / self.duration;
                (0..n)
                    .map(|i| {
                        let t = i as f64 / fs;
                        let phase = 2.0 * PI * (f_start * t + 0.5 * rate * t * t);
                        amplitudes.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * phase).cos()).sum()
                    })
                    .collect()
            }
            (FixtureKind::Am { carrier, amplitude, depth, rate }, _) => (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    amplitude * (1.0 + depth * (2.0 * PI * rate * t).cos()) * (2.0 * PI * carrier * t).cos()
                })
                .collect(),
            (_, Some(comps)) => (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    comps.iter().map(|c| c.amplitude * (2.0 * PI * c.frequency * t + c.phase).cos()).sum()
                })
                .collect(),
            (_, None) => unreachable!("stationary kinds always list components"),
        };
        let buffer = SignalBuffer::new(samples, self.sample_rate)?;
        Ok((buffer, FixtureTruth { spec: self.clone(), samples: n, components }))
    }
}
