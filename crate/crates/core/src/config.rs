//! Plain-text pipeline configuration: `key = value` lines, `#` comments.

use std::path::Path;

use crate::arma::{ArmaOrders, FitOptions};
use crate::error::{Error, Result};
use crate::format::FileFormat;
use crate::harmonics::ComponentRule;
use crate::qhm::{AdaptiveMode, AnalysisConfig, PitchConfig};
use crate::signal::WindowKind;
use crate::wav::{ClipPolicy, SampleFormat, WriteOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Used by generators; analysis takes the rate of its input.
    pub sample_rate: u32,
    pub frame_shift: f64,
    /// Full window length (s).
    pub window_length: f64,
    pub window: WindowKind,
    pub rule: ComponentRule,
    pub orders: ArmaOrders,
    pub fit: FitOptions,
    /// Mean loss per target above which a fitted frame is reported.
    pub fit_loss_threshold: f64,
    pub pitch: PitchConfig,
    pub adaptive: Option<AdaptiveMode>,
    pub adaptive_iters: usize,
    pub refine_f0: bool,
    pub format: FileFormat,
    pub sample_format: SampleFormat,
    pub clip: ClipPolicy,
    pub seed: u64,
    /// 0 lets the thread pool decide.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24000,
            frame_shift: 0.005,
            window_length: 0.02,
            window: WindowKind::Hann,
            rule: ComponentRule::default(),
            orders: ArmaOrders { p: 128, q: 128, r: 8 },
            fit: FitOptions::default(),
            fit_loss_threshold: 0.05,
            pitch: PitchConfig::default(),
            adaptive: None,
            adaptive_iters: 3,
            refine_f0: true,
            format: FileFormat::Json,
            sample_format: SampleFormat::Float32,
            clip: ClipPolicy::Clip,
            seed: 0,
            threads: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean '{value}' for '{key}'"))),
    }
}

/// `lo,hi` in Hz.
pub fn parse_f0_range(value: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => Ok((parse("f0_range", lo)?, parse("f0_range", hi)?)),
        _ => Err(Error::Config(format!("f0 range '{value}' is not 'min,max'"))),
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "sample_rate",
        "frame_shift",
        "window_length",
        "window",
        "k_guard",
        "max_components",
        "unvoiced_f0",
        "orders",
        "fit_method",
        "fit_max_steps",
        "fit_tolerance",
        "fit_init",
        "phase_weight",
        "amplitude_floor",
        "fit_loss_threshold",
        "f0_range",
        "voicing_threshold",
        "adaptive",
        "adaptive_iters",
        "refine_f0",
        "format",
        "sample_format",
        "clip",
        "seed",
        "threads",
    ];

    /// Apply one setting; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "sample_rate" => self.sample_rate = parse(key, v)?,
            "frame_shift" => self.frame_shift = parse(key, v)?,
            "window_length" => self.window_length = parse(key, v)?,
            "window" => self.window = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "k_guard" => self.rule.guard = parse(key, v)?,
            "max_components" => {
                let n: usize = parse(key, v)?;
                self.rule.max_components = (n > 0).then_some(n);
            }
            "unvoiced_f0" => self.rule.unvoiced_f0 = parse(key, v)?,
            "orders" => self.orders = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "fit_method" => self.fit.method = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "fit_max_steps" => self.fit.max_steps = parse(key, v)?,
            "fit_tolerance" => self.fit.tolerance = parse(key, v)?,
            "fit_init" => {
                self.fit.equation_error_init = match v {
                    "equation-error" => true,
                    "zero" => false,
                    _ => return Err(Error::Config(format!("fit_init must be 'equation-error' or 'zero', got '{v}'"))),
                }
            }
            "phase_weight" => self.fit.phase_weight = parse(key, v)?,
            "amplitude_floor" => self.fit.amplitude_floor = parse(key, v)?,
            "fit_loss_threshold" => self.fit_loss_threshold = parse(key, v)?,
            "f0_range" => (self.pitch.f0_min, self.pitch.f0_max) = parse_f0_range(v)?,
            "voicing_threshold" => self.pitch.voicing_threshold = parse(key, v)?,
            "adaptive" => {
                self.adaptive = match v {
                    "none" | "off" => None,
                    _ => Some(v.parse().map_err(|e: Error| Error::Config(e.to_string()))?),
                }
            }
            "adaptive_iters" => self.adaptive_iters = parse(key, v)?,
            "refine_f0" => self.refine_f0 = parse_bool(key, v)?,
            "format" => self.format = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "sample_format" => {
                self.sample_format = match v {
                    "float32" => SampleFormat::Float32,
                    "pcm16" => SampleFormat::Pcm16,
                    _ => return Err(Error::Config(format!("sample_format must be float32 or pcm16, got '{v}'"))),
                }
            }
            "clip" => {
                self.clip = match v {
                    "clip" => ClipPolicy::Clip,
                    "error" => ClipPolicy::Error,
                    _ => return Err(Error::Config(format!("clip must be 'clip' or 'error', got '{v}'"))),
                }
            }
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => Error::Config(format!("line {}: {other}", i + 1)),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive");
        }
        if !(self.frame_shift > 0.0 && self.frame_shift.is_finite()) {
            return fail("frame_shift must be positive");
        }
        if !(self.window_length > 0.0 && self.window_length.is_finite()) {
            return fail("window_length must be positive");
        }
        if !(self.rule.guard >= 0.0 && self.rule.unvoiced_f0 > 0.0) {
            return fail("k_guard must be >= 0 and unvoiced_f0 > 0");
        }
        if !(self.pitch.f0_min > 0.0 && self.pitch.f0_min < self.pitch.f0_max) {
            return fail("f0_range needs 0 < min < max");
        }
        if !(0.0..=1.0).contains(&self.pitch.voicing_threshold) {
            return fail("voicing_threshold must lie in [0, 1]");
        }
        if !(self.fit.phase_weight >= 0.0 && self.fit.amplitude_floor > 0.0 && self.fit.tolerance >= 0.0) {
            return fail("fitter weights must be non-negative and amplitude_floor positive");
        }
        if self.adaptive.is_some() && self.adaptive_iters == 0 {
            return fail("adaptive_iters must be positive when adaptive is enabled");
        }
        Ok(())
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            frame_shift: self.frame_shift,
            half_window: self.window_length / 2.0,
            window: self.window,
            rule: self.rule,
            pitch: self.pitch,
            adaptive: self.adaptive.map(|m| (m, self.adaptive_iters)),
            refine_f0: self.refine_f0,
        }
    }

    pub fn write_options(&self) -> WriteOptions {
        WriteOptions { format: self.sample_format, clip: self.clip }
    }
}
