//! Time- and pitch-scale modification with separate voiced and unvoiced
//! oscillator banks.

use rayon::prelude::*;

use crate::arma::{sample_harmonics, ArmaCascade};
use crate::error::{invalid, Error, Result};
use crate::harmonics::{ComponentRule, F0Track};
use crate::interp::linear_interp;
use crate::signal::{FrameGrid, SignalBuffer};
use crate::synth::{excitation_phase, render, FrameTracks};

/// Per-frame factors plus the voicing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSchedule {
    pub betas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub voiced: Vec<bool>,
}

/// One line of a schedule file: from `time` on, interpolate towards the next
/// breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub time: f64,
    pub beta: f64,
    pub rho: f64,
}

fn check_factor(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} factor {v} must be positive and finite")))
    }
}

impl ScaleSchedule {
    pub fn new(betas: Vec<f64>, rhos: Vec<f64>, voiced: Vec<bool>) -> Result<Self> {
        if betas.len() != rhos.len() || betas.len() != voiced.len() {
            return Err(Error::LengthMismatch {
                what: "schedule columns",
                left: betas.len(),
                right: rhos.len().max(voiced.len()),
            });
        }
        for &b in &betas {
            check_factor(b, "time-scale")?;
        }
        for &r in &rhos {
            check_factor(r, "pitch-scale")?;
        }
        Ok(Self { betas, rhos, voiced })
    }

    /// Constant factors with the voicing taken from the f0 track.
    pub fn constant(f0: &F0Track, beta: f64, rho: f64) -> Result<Self> {
        Self::new(vec![beta; f0.len()], vec![rho; f0.len()], f0.voicing())
    }

    /// Breakpoints linearly interpolated to the frame centers (endpoint hold).
    pub fn from_breakpoints(points: &[Breakpoint], f0: &F0Track) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("schedule has no breakpoints"));
        }
        if points.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(invalid("schedule times must increase strictly"));
        }
        let times: Vec<f64> = points.iter().map(|p| p.time).collect();
        let betas: Vec<f64> = points.iter().map(|p| p.beta).collect();
        let rhos: Vec<f64> = points.iter().map(|p| p.rho).collect();
        let centers = f0.grid.centers();
        Self::new(
            linear_interp(&times, &betas, centers)?,
            linear_interp(&times, &rhos, centers)?,
            f0.voicing(),
        )
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// Parse `time beta rho` lines; blank lines and `#` comments are skipped.
pub fn parse_schedule(text: &str) -> Result<Vec<Breakpoint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("schedule line {}: '{s}' is not a number", i + 1)))
        };
        if fields.len() != 3 {
            return Err(Error::Format(format!("schedule line {}: expected 'time beta rho'", i + 1)));
        }
        let p = Breakpoint {
            time: parse(fields[0])?,
            beta: parse(fields[1])?,
            rho: parse(fields[2])?,
        };
        check_factor(p.beta, "time-scale")?;
        check_factor(p.rho, "pitch-scale")?;
        if !p.time.is_finite() {
            return Err(Error::Format(format!("schedule line {}: bad time", i + 1)));
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Format("schedule file has no breakpoints".into()));
    }
    Ok(out)
}

/// `t'_0 = 0`, `t'_l = t'_{l-1} + beta_l (t_l - t_{l-1})`.
pub fn scaled_times(grid: &FrameGrid, betas: &[f64]) -> Result<Vec<f64>> {
    if betas.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "betas vs frames",
            left: betas.len(),
            right: grid.len(),
        });
    }
    for &b in betas {
        check_factor(b, "time-scale")?;
    }
    let c = grid.centers();
    let mut out = Vec::with_capacity(c.len());
    if c.is_empty() {
        return Ok(out);
    }
    out.push(0.0);
    for l in 1..c.len() {
        out.push(out[l - 1] + betas[l] * (c[l] - c[l - 1]));
    }
    Ok(out)
}

/// Frequencies of both banks. Rows of one bank share a width; `counts` give
/// the number of real components per frame (the rest is padding).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledFrequencies {
    pub voiced: Vec<Vec<f64>>,
    pub voiced_counts: Vec<usize>,
    pub unvoiced: Vec<Vec<f64>>,
    pub unvoiced_counts: Vec<usize>,
}

pub fn scaled_freqs(f0: &F0Track, rhos: &[f64], rule: &ComponentRule) -> Result<ScaledFrequencies> {
    if rhos.len() != f0.len() {
        return Err(Error::LengthMismatch {
            what: "rhos vs frames",
            left: rhos.len(),
            right: f0.len(),
        });
    }
    for &r in rhos {
        check_factor(r, "pitch-scale")?;
    }
    let fs = f0.grid.sample_rate() as f64;
    let limit = fs / 2.0 - rule.guard;
    let unvoiced_counts: Vec<usize> = f0.values.iter().map(|&v| rule.count(v, fs)).collect();
    let voiced_counts: Vec<usize> = f0
        .values
        .iter()
        .zip(rhos)
        .zip(&unvoiced_counts)
        .map(|((&v, &rho), &k)| (1..=k).take_while(|&i| i as f64 * rule.spacing(v) * rho <= limit).count())
        .collect();
    let uw = unvoiced_counts.iter().copied().max().unwrap_or(0);
    let vw = voiced_counts.iter().copied().max().unwrap_or(0);
    let row = |spacing: f64, width: usize| (1..=width).map(|k| k as f64 * spacing).collect::<Vec<f64>>();
    Ok(ScaledFrequencies {
        voiced: f0
            .values
            .iter()
            .zip(rhos)
            .map(|(&v, &rho)| row(rule.spacing(v) * rho, vw))
            .collect(),
        voiced_counts,
        unvoiced: f0.values.iter().map(|&v| row(rule.spacing(v), uw)).collect(),
        unvoiced_counts,
    })
}

/// Masked envelope amplitudes of both banks, plus the voiced frames left
/// without any component.
#[derive(Debug, Clone, PartialEq)]
pub struct BankAmplitudes {
    pub voiced: Vec<Vec<f64>>,
    pub unvoiced: Vec<Vec<f64>>,
    pub silent_frames: Vec<usize>,
}

pub fn modified_amplitudes(
    cascade: &ArmaCascade,
    schedule: &ScaleSchedule,
    freqs: &ScaledFrequencies,
) -> Result<BankAmplitudes> {
    let n = cascade.n_frames();
    if schedule.len() != n || freqs.voiced.len() != n || freqs.unvoiced.len() != n {
        return Err(invalid("schedule, frequencies and cascade differ in frame count"));
    }
    let fs = cascade.grid.sample_rate() as f64;
    let rows: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|l| {
            let vw = freqs.voiced[l].len();
            let uw = freqs.unvoiced[l].len();
            let mut v = vec![0.0; vw];
            let mut u = vec![0.0; uw];
            let mut silent = false;
            if schedule.voiced[l] {
                let k_mod = freqs.voiced_counts[l];
                let k_orig = freqs.unvoiced_counts[l];
                if k_mod == 0 {
                    silent = k_orig > 0;
                } else {
                    let norm = (k_orig as f64 / k_mod as f64).sqrt();
                    let s = sample_harmonics(&cascade.frames[l], &freqs.voiced[l][..k_mod], fs)?;
                    for (dst, m) in v.iter_mut().zip(&s.magnitudes) {
                        *dst = norm * m;
                    }
                }
            } else {
                let k = freqs.unvoiced_counts[l];
                let s = sample_harmonics(&cascade.frames[l], &freqs.unvoiced[l][..k], fs)?;
                u[..k].copy_from_slice(&s.magnitudes);
            }
            Ok((v, u, silent))
        })
        .collect::<Result<_>>()?;
    let mut out = BankAmplitudes {
        voiced: Vec::with_capacity(n),
        unvoiced: Vec::with_capacity(n),
        silent_frames: Vec::new(),
    };
    for (l, (v, u, silent)) in rows.into_iter().enumerate() {
        out.voiced.push(v);
        out.unvoiced.push(u);
        if silent {
            out.silent_frames.push(l);
        }
    }
    Ok(out)
}

/// Excitation phase on the scaled time axis plus the envelope phase delay
/// at the bank's frequencies (first `counts[l]` components of each frame).
pub fn modified_phases(
    cascade: &ArmaCascade,
    times: &[f64],
    freqs: &[Vec<f64>],
    counts: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let n = cascade.n_frames();
    if times.len() != n || counts.len() != n {
        return Err(invalid("times, counts and cascade differ in frame count"));
    }
    let excitation = excitation_phase(freqs, times)?;
    let fs = cascade.grid.sample_rate() as f64;
    (0..n)
        .into_par_iter()
        .map(|l| {
            let s = sample_harmonics(&cascade.frames[l], &freqs[l][..counts[l]], fs)?;
            Ok(excitation[l]
                .iter()
                .enumerate()
                .map(|(k, e)| e + s.delays.get(k).copied().unwrap_or(0.0))
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Modified {
    pub buffer: SignalBuffer,
    /// Scaled frame times.
    pub times: Vec<f64>,
    /// Voiced frames with every shifted harmonic above the limit.
    pub silent_frames: Vec<usize>,
}

pub fn modify(
    cascade: &ArmaCascade,
    f0: &F0Track,
    schedule: &ScaleSchedule,
    rule: &ComponentRule,
) -> Result<Modified> {
    if cascade.grid != f0.grid {
        return Err(invalid("cascade and f0 track use different frame grids"));
    }
    if schedule.len() != f0.len() {
        return Err(Error::LengthMismatch {
            what: "schedule vs frames",
            left: schedule.len(),
            right: f0.len(),
        });
    }
    let sr = f0.grid.sample_rate();
    let times = scaled_times(&f0.grid, &schedule.betas)?;
    let freqs = scaled_freqs(f0, &schedule.rhos, rule)?;
    let amps = modified_amplitudes(cascade, schedule, &freqs)?;
    let voiced = FrameTracks {
        times: times.clone(),
        phases: modified_phases(cascade, &times, &freqs.voiced, &freqs.voiced_counts)?,
        frequencies: freqs.voiced,
        amplitudes: amps.voiced,
    };
    let unvoiced = FrameTracks {
        times: times.clone(),
        phases: modified_phases(cascade, &times, &freqs.unvoiced, &freqs.unvoiced_counts)?,
        frequencies: freqs.unvoiced,
        amplitudes: amps.unvoiced,
    };
    let (yv, yu) = rayon::join(|| render(&voiced, sr), || render(&unvoiced, sr));
    let (yv, yu) = (yv?, yu?);
    let samples = yv.samples().iter().zip(yu.samples()).map(|(a, b)| a + b).collect();
    Ok(Modified {
        buffer: SignalBuffer::new(samples, sr)?,
        times,
        silent_frames: amps.silent_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma::{ArmaFrame, ArmaOrders, ArmaSection};
    use crate::signal::WindowKind;
    use crate::synth::{arma_tracks, synthesize_arma};
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, shift: f64) -> FrameGrid {
        FrameGrid::new((0..n).map(|l| l as f64 * shift).collect(), shift, 0.01, WindowKind::Hann, 24000).unwrap()
    }

    fn orders() -> ArmaOrders {
        ArmaOrders::new(2, 2, 1).unwrap()
    }

    fn fixture_cascade(g: FrameGrid) -> ArmaCascade {
        let frame = ArmaFrame { gain: 0.05, sections: vec![ArmaSection::new(vec![-1.3, 0.64], vec![0.2, 0.1])] };
        ArmaCascade::constant(g, orders(), frame).unwrap()
    }

    #[test]
    fn scaled_time_closed_forms() {
        let g = grid(4, 0.01);
        assert_eq!(scaled_times(&g, &[1.0; 4]).unwrap(), vec![0.0, 0.01, 0.02, 0.03]);
        let t = scaled_times(&g, &[2.0; 4]).unwrap();
        for (l, v) in t.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.02 * l as f64, epsilon = 1e-15);
        }
        let t = scaled_times(&grid(3, 0.01), &[1.0, 2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(t[1], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(t[2], 0.03, epsilon = 1e-15);
        assert!(scaled_times(&grid(2, 0.01), &[1.0, 0.0]).is_err());
    }

    #[test]
    fn frequency_sets() {
        let g = grid(2, 0.005);
        let f0 = F0Track::new(g, vec![200.0, 0.0]).unwrap();
        let rule = ComponentRule::default();
        let same = scaled_freqs(&f0, &[1.0, 1.0], &rule).unwrap();
        assert_eq!(same.voiced_counts, same.unvoiced_counts);
        assert_eq!(same.voiced[0][..59], same.unvoiced[0][..59]);
        let up = scaled_freqs(&f0, &[2.0, 2.0], &rule).unwrap();
        assert_eq!(up.voiced_counts[0], 29);
        assert_eq!(up.unvoiced_counts[0], 59);
        let r = 2f64.sqrt();
        let s = scaled_freqs(&f0, &[r, r], &rule).unwrap();
        assert_abs_diff_eq!(s.voiced[0][0], 200.0 * r, epsilon = 1e-12);
        assert_eq!(s.unvoiced[0][0], 200.0);
    }

    #[test]
    fn masks_partition_banks() {
        let g = grid(4, 0.005);
        let f0 = F0Track::new(g.clone(), vec![150.0, 150.0, 0.0, 0.0]).unwrap();
        let c = fixture_cascade(g);
        let sched = ScaleSchedule::constant(&f0, 1.0, 1.0).unwrap();
        let freqs = scaled_freqs(&f0, &sched.rhos, &ComponentRule::default()).unwrap();
        let a = modified_amplitudes(&c, &sched, &freqs).unwrap();
        for l in 0..4 {
            let v_on = a.voiced[l].iter().any(|v| *v > 0.0);
            let u_on = a.unvoiced[l].iter().any(|v| *v > 0.0);
            assert!(!(v_on && u_on));
            assert_eq!(v_on, l < 2);
        }
        // identity rho: voiced amplitudes equal the synthesis amplitudes
        let tr = arma_tracks(&c, &f0, &ComponentRule::default()).unwrap();
        assert_eq!(a.voiced[0][..79], tr.amplitudes[0][..79]);
    }

    #[test]
    fn flat_envelope_power_is_kept() {
        let g = grid(2, 0.005);
        let f0 = F0Track::new(g.clone(), vec![200.0, 200.0]).unwrap();
        let c = ArmaCascade::constant(g, orders(), ArmaFrame::identity(1.0, orders())).unwrap();
        let sched = ScaleSchedule::constant(&f0, 1.0, 2.0).unwrap();
        let freqs = scaled_freqs(&f0, &sched.rhos, &ComponentRule::default()).unwrap();
        let a = modified_amplitudes(&c, &sched, &freqs).unwrap();
        let p_mod: f64 = a.voiced[0].iter().map(|v| 2.0 * v * v).sum();
        let p_orig = 2.0 * 59.0;
        assert!((p_mod / p_orig - 1.0).abs() < 0.01);
        for v in &a.voiced[0][..29] {
            assert_abs_diff_eq!(*v, (59.0f64 / 29.0).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_increments_scale_with_beta() {
        let g = grid(3, 0.01);
        let c = ArmaCascade::constant(g.clone(), orders(), ArmaFrame::identity(1.0, orders())).unwrap();
        let freqs = vec![vec![100.0]; 3];
        let t1 = scaled_times(&g, &[1.0; 3]).unwrap();
        let t2 = scaled_times(&g, &[2.0; 3]).unwrap();
        let p1 = modified_phases(&c, &t1, &freqs, &[1; 3]).unwrap();
        let p2 = modified_phases(&c, &t2, &freqs, &[1; 3]).unwrap();
        assert_eq!(p1, excitation_phase(&freqs, g.centers()).unwrap());
        assert_abs_diff_eq!(p2[2][0], 2.0 * p1[2][0], epsilon = 1e-12);
    }

    #[test]
    fn identity_schedule_reproduces_synthesis() {
        let n = 120;
        let g = grid(n, 0.005);
        let values: Vec<f64> = (0..n).map(|l| if (30..80).contains(&l) { 0.0 } else { 140.0 + l as f64 * 0.2 }).collect();
        let f0 = F0Track::new(g.clone(), values).unwrap();
        let c = fixture_cascade(g);
        let rule = ComponentRule::default();
        let reference = synthesize_arma(&c, &f0, &rule).unwrap();
        let out = modify(&c, &f0, &ScaleSchedule::constant(&f0, 1.0, 1.0).unwrap(), &rule).unwrap();
        assert_eq!(out.buffer.len(), reference.len());
        for (a, b) in out.buffer.samples().iter().zip(reference.samples()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn duration_follows_beta() {
        let n = 100;
        let g = grid(n, 0.005);
        let f0 = F0Track::new(g.clone(), vec![150.0; n]).unwrap();
        let c = fixture_cascade(g);
        let betas: Vec<f64> = (0..n).map(|l| 0.5 + (l % 7) as f64 * 0.3).collect();
        let sched = ScaleSchedule::new(betas.clone(), vec![1.0; n], vec![true; n]).unwrap();
        let out = modify(&c, &f0, &sched, &ComponentRule::default()).unwrap();
        let expected: f64 = betas[1..].iter().map(|b| b * 0.005).sum();
        assert!((out.buffer.duration() - expected).abs() <= 0.005);
    }

    #[test]
    fn schedule_file_parsing() {
        let pts = parse_schedule("# t beta rho\n0 1 1\n\n0.5 2 1.5 # ramp\n").unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1], Breakpoint { time: 0.5, beta: 2.0, rho: 1.5 });
        assert!(parse_schedule("0 1").is_err());
        assert!(parse_schedule("0 -1 1").is_err());
        assert!(parse_schedule("").is_err());
        let g = grid(3, 0.25);
        let f0 = F0Track::new(g, vec![100.0; 3]).unwrap();
        let s = ScaleSchedule::from_breakpoints(&pts, &f0).unwrap();
        assert_eq!(s.betas, vec![1.0, 1.5, 2.0]);
    }
}
