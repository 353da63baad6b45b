//! Phase accumulation and the oscillator bank.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::arma::{sample_harmonics, ArmaCascade};
use crate::error::{invalid, Error, Result};
use crate::harmonics::{ComponentRule, F0Track, HarmonicSet};
use crate::interp::{hermite, pchip_slopes};
use crate::signal::SignalBuffer;

/// Components closer than this to Nyquist (Hz) are silenced.
pub const MUTE_GUARD: f64 = 50.0;
const BLOCK: usize = 4096;

fn check_rect(rows: &[Vec<f64>], n_frames: usize, what: &'static str) -> Result<usize> {
    if rows.len() != n_frames {
        return Err(Error::LengthMismatch {
            what,
            left: rows.len(),
            right: n_frames,
        });
    }
    let k = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::LengthMismatch {
            what,
            left: r.len(),
            right: k,
        });
    }
    Ok(k)
}

/// Trapezoidal accumulation of `[frame][k]` frequencies over the knot times,
/// zero at the first knot.
pub fn excitation_phase(freqs: &[Vec<f64>], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let k = check_rect(freqs, times.len(), "frequency rows vs knots")?;
    if freqs.iter().flatten().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite("component frequencies"));
    }
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(out);
    }
    out.push(vec![0.0; k]);
    for l in 1..times.len() {
        let dt = times[l] - times[l - 1];
        let row = (0..k)
            .map(|c| out[l - 1][c] + PI * (freqs[l - 1][c] + freqs[l][c]) * dt)
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Excitation phase plus the running sum of compensations (frame 0 included).
pub fn compensated_phase(excitation: &[Vec<f64>], compensations: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = check_rect(compensations, excitation.len(), "compensation rows")?;
    check_rect(excitation, excitation.len(), "excitation rows")?;
    if excitation.first().is_some_and(|r| r.len() != k) {
        return Err(Error::LengthMismatch {
            what: "compensation vs excitation components",
            left: k,
            right: excitation[0].len(),
        });
    }
    let mut running = vec![0.0; k];
    let mut out = Vec::with_capacity(excitation.len());
    for (l, (exc, comp)) in excitation.iter().zip(compensations).enumerate() {
        let mut row = Vec::with_capacity(k);
        for c in 0..k {
            let d = comp[c];
            if !(d.abs() <= PI + 1e-12) {
                return Err(Error::CompensationOutOfRange {
                    frame: l,
                    component: c,
                    value: d,
                });
            }
            running[c] += d;
            row.push(exc[c] + running[c]);
        }
        out.push(row);
    }
    Ok(out)
}

/// Excitation phase plus the summed per-section phase delays at `freqs`.
pub fn delayed_phase(excitation: &[Vec<f64>], cascade: &ArmaCascade, freqs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = cascade.n_frames();
    let k = check_rect(freqs, n, "frequency rows vs cascade frames")?;
    check_rect(excitation, n, "excitation rows vs cascade frames")?;
    let fs = cascade.grid.sample_rate() as f64;
    (0..n)
        .into_par_iter()
        .map(|l| {
            if excitation[l].len() != k {
                return Err(invalid("excitation and frequency rows differ in width"));
            }
            let s = sample_harmonics(&cascade.frames[l], &freqs[l], fs)?;
            Ok(excitation[l].iter().zip(&s.delays).map(|(e, d)| e + d).collect())
        })
        .collect()
}

/// Framewise tracks ready for rendering; every row has the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTracks {
    /// Knot times (s), strictly increasing.
    pub times: Vec<f64>,
    /// Hz, used only to mute components near Nyquist.
    pub frequencies: Vec<Vec<f64>>,
    pub amplitudes: Vec<Vec<f64>>,
    /// Unwrapped phases (rad).
    pub phases: Vec<Vec<f64>>,
}

impl FrameTracks {
    pub fn n_components(&self) -> usize {
        self.amplitudes.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<usize> {
        let n = self.times.len();
        let k = check_rect(&self.amplitudes, n, "amplitude rows vs knots")?;
        for (rows, what) in [(&self.frequencies, "frequency rows vs knots"), (&self.phases, "phase rows vs knots")] {
            let kk = check_rect(rows, n, what)?;
            if n > 0 && kk != k {
                return Err(Error::LengthMismatch { what, left: kk, right: k });
            }
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("knot times must increase strictly"));
        }
        if self.amplitudes.iter().flatten().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("amplitudes must be finite and non-negative"));
        }
        if self.phases.iter().flatten().any(|p| !p.is_finite()) || self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("tracks"));
        }
        Ok(k)
    }

    /// Number of output samples from the first to the last knot.
    pub fn output_len(&self, sample_rate: f64) -> usize {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => ((b - a) * sample_rate + 1e-6).floor() as usize + 1,
            _ => 0,
        }
    }

    /// Audio-rate amplitude and phase of component `k` (unmuted).
    pub fn component_track(&self, k: usize, sample_rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let width = self.validate()?;
        if k >= width {
            return Err(invalid(format!("component {k} out of range")));
        }
        let prepared = Prepared::new(self, sample_rate);
        let len = self.output_len(sample_rate);
        let col = &prepared.columns[k];
        let (mut amps, mut phases) = (Vec::with_capacity(len), Vec::with_capacity(len));
        let mut seg = 0;
        for n in 0..len {
            let t = prepared.sample_time(n);
            seg = prepared.advance(seg, t);
            let (a, p) = prepared.eval(col, seg, t);
            amps.push(a);
            phases.push(p);
        }
        Ok((amps, phases))
    }
}

struct Column {
    amps: Vec<f64>,
    phases: Vec<f64>,
    slopes: Vec<f64>,
    /// Per segment: false when muted or silent at both ends.
    active: Vec<bool>,
}

struct Prepared<'a> {
    times: &'a [f64],
    fs: f64,
    columns: Vec<Column>,
}

impl<'a> Prepared<'a> {
    fn new(tracks: &'a FrameTracks, fs: f64) -> Self {
        let n = tracks.times.len();
        let k = tracks.n_components();
        let limit = fs / 2.0 - MUTE_GUARD;
        let columns = (0..k)
            .map(|c| {
                let amps: Vec<f64> = tracks.amplitudes.iter().map(|r| r[c]).collect();
                let phases: Vec<f64> = tracks.phases.iter().map(|r| r[c]).collect();
                let slopes = if n >= 2 { pchip_slopes(&tracks.times, &phases) } else { vec![0.0; n] };
                let loud = |l: usize| tracks.frequencies[l][c].abs() <= limit;
                let active = if n >= 2 {
                    (0..n - 1)
                        .map(|l| loud(l) && loud(l + 1) && (amps[l] > 0.0 || amps[l + 1] > 0.0))
                        .collect()
                } else {
                    vec![n == 1 && loud(0) && amps[0] > 0.0]
                };
                Column {
                    amps,
                    phases,
                    slopes,
                    active,
                }
            })
            .collect();
        Self {
            times: &tracks.times,
            fs,
            columns,
        }
    }

    fn sample_time(&self, n: usize) -> f64 {
        self.times[0] + n as f64 / self.fs
    }

    /// Segment containing `t`, searching forward from `seg`.
    fn advance(&self, mut seg: usize, t: f64) -> usize {
        let last = self.times.len().saturating_sub(2);
        while seg < last && t >= self.times[seg + 1] {
            seg += 1;
        }
        seg
    }

    fn locate(&self, t: f64) -> usize {
        let last = self.times.len().saturating_sub(2);
        self.times.partition_point(|&x| x <= t).saturating_sub(1).min(last)
    }

    fn eval(&self, col: &Column, seg: usize, t: f64) -> (f64, f64) {
        if self.times.len() == 1 {
            return (col.amps[0], col.phases[0]);
        }
        let (t0, t1) = (self.times[seg], self.times[seg + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let a = col.amps[seg] + s * (col.amps[seg + 1] - col.amps[seg]);
        let tc = t.clamp(t0, t1);
        let p = hermite(t0, t1, col.phases[seg], col.phases[seg + 1], col.slopes[seg], col.slopes[seg + 1], tc);
        (a, p)
    }

    fn render_block(&self, n0: usize, out: &mut [f64]) {
        let start = self.locate(self.sample_time(n0));
        for col in &self.columns {
            let mut seg = start;
            for (i, o) in out.iter_mut().enumerate() {
                let t = self.sample_time(n0 + i);
                seg = self.advance(seg, t);
                if !col.active[seg] {
                    continue;
                }
                let (a, p) = self.eval(col, seg, t);
                *o += 2.0 * a * p.cos();
            }
        }
    }
}

/// Oscillator bank: PCHIP phase, linear amplitude, `sum_k 2 A_k cos(phi_k)`
/// summed in ascending k for every sample. Output covers the first to the
/// last knot.
pub fn render(tracks: &FrameTracks, sample_rate: u32) -> Result<SignalBuffer> {
    tracks.validate()?;
    let fs = sample_rate as f64;
    let len = tracks.output_len(fs);
    if len == 0 {
        return SignalBuffer::new(Vec::new(), sample_rate);
    }
    let prepared = Prepared::new(tracks, fs);
    let mut out = vec![0.0; len];
    out.par_chunks_mut(BLOCK)
        .enumerate()
        .for_each(|(b, chunk)| prepared.render_block(b * BLOCK, chunk));
    SignalBuffer::new(out, sample_rate)
}

/// Quasi-harmonic resynthesis: excitation phase, cumulative compensation,
/// oscillator bank.
pub fn synthesize_qhm(set: &HarmonicSet) -> Result<SignalBuffer> {
    set.validate()?;
    let freqs = set.dense_frequencies();
    let excitation = excitation_phase(&freqs, set.grid.centers())?;
    let phases = compensated_phase(&excitation, &set.dense_compensations())?;
    let tracks = FrameTracks {
        times: set.grid.centers().to_vec(),
        frequencies: freqs,
        amplitudes: set.dense_amplitudes(),
        phases,
    };
    render(&tracks, set.grid.sample_rate())
}

/// Harmonic grid `k * spacing` for every frame, padded to the widest frame.
/// Returns the rows and the per-frame component counts.
pub fn harmonic_grid(f0: &F0Track, rule: &ComponentRule) -> (Vec<Vec<f64>>, Vec<usize>) {
    let fs = f0.grid.sample_rate() as f64;
    let counts: Vec<usize> = f0.values.iter().map(|&v| rule.count(v, fs)).collect();
    let width = counts.iter().copied().max().unwrap_or(0);
    let rows = f0
        .values
        .iter()
        .map(|&v| {
            let s = rule.spacing(v);
            (1..=width).map(|k| k as f64 * s).collect()
        })
        .collect();
    (rows, counts)
}

/// Envelope-sampled tracks on the harmonic grid of `f0`.
pub fn arma_tracks(cascade: &ArmaCascade, f0: &F0Track, rule: &ComponentRule) -> Result<FrameTracks> {
    if cascade.grid != f0.grid {
        return Err(invalid("cascade and f0 track use different frame grids"));
    }
    let (freqs, counts) = harmonic_grid(f0, rule);
    let excitation = excitation_phase(&freqs, f0.grid.centers())?;
    let fs = f0.grid.sample_rate() as f64;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..f0.len())
        .into_par_iter()
        .map(|l| {
            let k = counts[l];
            let s = sample_harmonics(&cascade.frames[l], &freqs[l][..k], fs)?;
            let width = freqs[l].len();
            let mut amps = s.magnitudes;
            amps.resize(width, 0.0);
            let phases = (0..width)
                .map(|c| excitation[l][c] + s.delays.get(c).copied().unwrap_or(0.0))
                .collect();
            Ok((amps, phases))
        })
        .collect::<Result<_>>()?;
    let (amplitudes, phases) = rows.into_iter().unzip();
    Ok(FrameTracks {
        times: f0.grid.centers().to_vec(),
        frequencies: freqs,
        amplitudes,
        phases,
    })
}

/// Envelope-driven resynthesis on the harmonic grid of `f0`.
pub fn synthesize_arma(cascade: &ArmaCascade, f0: &F0Track, rule: &ComponentRule) -> Result<SignalBuffer> {
    render(&arma_tracks(cascade, f0, rule)?, f0.grid.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma::{ArmaFrame, ArmaOrders, ArmaSection};
    use crate::signal::{FrameGrid, WindowKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize, shift: f64) -> FrameGrid {
        FrameGrid::new((0..n).map(|l| l as f64 * shift).collect(), shift, 0.01, WindowKind::Hann, 24000).unwrap()
    }

    fn dft_mag(x: &[f64], f: f64, fs: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in x.iter().enumerate() {
            let a = 2.0 * PI * f * n as f64 / fs;
            re += v * a.cos();
            im -= v * a.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn excitation_closed_forms() {
        let t = [0.0, 0.01, 0.02];
        let e = excitation_phase(&vec![vec![100.0]; 3], &t).unwrap();
        assert_abs_diff_eq!(e[1][0], 2.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(e[2][0], 4.0 * PI, epsilon = 1e-12);
        let z = excitation_phase(&vec![vec![0.0]; 3], &t).unwrap();
        assert!(z.iter().flatten().all(|v| *v == 0.0));
        let e = excitation_phase(&[vec![100.0], vec![120.0]], &t[..2]).unwrap();
        assert_abs_diff_eq!(e[1][0], 2.2 * PI, epsilon = 1e-12);
    }

    #[test]
    fn compensation_prefix_sum() {
        let exc = vec![vec![0.0, 1.0]; 4];
        let comps = vec![vec![PI / 2.0, 0.0], vec![0.0, 0.1], vec![0.0, -0.3], vec![0.0, 0.2]];
        let p = compensated_phase(&exc, &comps).unwrap();
        for row in &p {
            assert_abs_diff_eq!(row[0], PI / 2.0, epsilon = 1e-15);
        }
        // prefix-sum oracle
        let mut acc = 0.0;
        for (l, row) in p.iter().enumerate() {
            acc += comps[l][1];
            assert_abs_diff_eq!(row[1], 1.0 + acc, epsilon = 1e-15);
        }
        assert!(compensated_phase(&exc, &vec![vec![4.0, 0.0]; 4]).is_err());
    }

    #[test]
    fn delayed_phase_identity_and_offset() {
        let g = grid(3, 0.005);
        let orders = ArmaOrders::new(2, 2, 1).unwrap();
        let id = ArmaCascade::constant(g.clone(), orders, ArmaFrame::identity(1.0, orders)).unwrap();
        let freqs = vec![vec![100.0, 200.0]; 3];
        let exc = excitation_phase(&freqs, g.centers()).unwrap();
        assert_eq!(delayed_phase(&exc, &id, &freqs).unwrap(), exc);
        let frame = ArmaFrame { gain: 1.0, sections: vec![ArmaSection::new(vec![-0.5, 0.2], vec![0.3, 0.0])] };
        let c = ArmaCascade::constant(g, orders, frame.clone()).unwrap();
        let d = delayed_phase(&exc, &c, &freqs).unwrap();
        let s = sample_harmonics(&frame, &freqs[0], 24000.0).unwrap();
        for l in 0..3 {
            for k in 0..2 {
                assert_abs_diff_eq!(d[l][k] - exc[l][k], s.delays[k], epsilon = 1e-12);
            }
        }
    }

    fn constant_tracks(freqs: &[f64], amps: &[f64], phase0: &[f64], n: usize, shift: f64) -> FrameTracks {
        let times: Vec<f64> = (0..n).map(|l| l as f64 * shift).collect();
        FrameTracks {
            frequencies: vec![freqs.to_vec(); n],
            amplitudes: vec![amps.to_vec(); n],
            phases: times
                .iter()
                .map(|t| freqs.iter().zip(phase0).map(|(f, p)| p + 2.0 * PI * f * t).collect())
                .collect(),
            times,
        }
    }

    #[test]
    fn single_stationary_component() {
        let tr = constant_tracks(&[100.0], &[0.5], &[0.0], 101, 0.01);
        let y = render(&tr, 24000).unwrap();
        assert_eq!(y.len(), 24001);
        for (n, v) in y.samples().iter().enumerate().step_by(37) {
            assert_abs_diff_eq!(*v, (2.0 * PI * 100.0 * n as f64 / 24000.0).cos(), epsilon = 1e-9);
        }
        let x = &y.samples()[..24000];
        assert!(dft_mag(x, 100.0, 24000.0) > 10.0 * dft_mag(x, 101.0, 24000.0).max(dft_mag(x, 99.0, 24000.0)));
    }

    #[test]
    fn silence_and_empty() {
        let tr = constant_tracks(&[100.0, 200.0], &[0.0, 0.0], &[0.0, 0.0], 10, 0.005);
        assert!(render(&tr, 24000).unwrap().samples().iter().all(|v| *v == 0.0));
        let set = HarmonicSet::new(grid(0, 0.005), vec![], vec![], vec![], vec![]).unwrap();
        assert!(synthesize_qhm(&set).unwrap().is_empty());
    }

    #[test]
    fn dense_knots_match_direct_evaluation() {
        // knots at every sample: interpolation is exact at knots
        let fs = 24000.0;
        let n = 480;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
        let amp = |k: usize, t: f64| if k == 0 { 0.3 + t } else { 0.2 - 0.5 * t };
        let ph = |k: usize, t: f64| if k == 0 { 0.4 + 2.0 * PI * 100.0 * t } else { -1.0 + 2.0 * PI * 200.0 * t + 30.0 * t * t };
        let tr = FrameTracks {
            frequencies: vec![vec![100.0, 200.0]; n],
            amplitudes: times.iter().map(|&t| vec![amp(0, t), amp(1, t)]).collect(),
            phases: times.iter().map(|&t| vec![ph(0, t), ph(1, t)]).collect(),
            times: times.clone(),
        };
        let y = render(&tr, 24000).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let direct = 2.0 * amp(0, t) * ph(0, t).cos() + 2.0 * amp(1, t) * ph(1, t).cos();
            assert_abs_diff_eq!(y.samples()[i], direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn near_nyquist_components_are_muted() {
        let tr = constant_tracks(&[11980.0], &[1.0], &[0.0], 5, 0.005);
        assert!(render(&tr, 24000).unwrap().samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn superposition_and_scaling() {
        let a = constant_tracks(&[130.0], &[0.4], &[0.2], 20, 0.005);
        let b = constant_tracks(&[370.0], &[0.1], &[-1.0], 20, 0.005);
        let ab = FrameTracks {
            times: a.times.clone(),
            frequencies: a.frequencies.iter().zip(&b.frequencies).map(|(x, y)| [x.clone(), y.clone()].concat()).collect(),
            amplitudes: a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| [x.clone(), y.clone()].concat()).collect(),
            phases: a.phases.iter().zip(&b.phases).map(|(x, y)| [x.clone(), y.clone()].concat()).collect(),
        };
        let (ya, yb, yab) = (render(&a, 24000).unwrap(), render(&b, 24000).unwrap(), render(&ab, 24000).unwrap());
        for i in 0..yab.len() {
            assert_abs_diff_eq!(yab.samples()[i], ya.samples()[i] + yb.samples()[i], epsilon = 1e-12);
        }
        let mut scaled = a.clone();
        scaled.amplitudes.iter_mut().flatten().for_each(|v| *v *= 3.0);
        let ys = render(&scaled, 24000).unwrap();
        for i in 0..ys.len() {
            assert_abs_diff_eq!(ys.samples()[i], 3.0 * ya.samples()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn arma_flat_envelope_three_harmonics() {
        let g = grid(201, 0.005);
        let f0 = F0Track::new(g.clone(), vec![200.0; 201]).unwrap();
        let orders = ArmaOrders::new(0, 0, 1).unwrap();
        let c = ArmaCascade::constant(g, orders, ArmaFrame::identity(1.0, orders)).unwrap();
        let rule = ComponentRule {
            max_components: Some(3),
            ..Default::default()
        };
        let y = synthesize_arma(&c, &f0, &rule).unwrap();
        let x = &y.samples()[..24000];
        let m: Vec<f64> = [200.0, 400.0, 600.0].iter().map(|f| dft_mag(x, *f, 24000.0)).collect();
        for v in &m {
            assert!((v / m[0] - 1.0).abs() < 0.01);
        }
        assert!(dft_mag(x, 800.0, 24000.0) < 1e-6 * m[0]);
    }

    #[test]
    fn arma_unvoiced_bed_power() {
        let n = 401;
        let g = grid(n, 0.005);
        let f0 = F0Track::new(g.clone(), vec![0.0; n]).unwrap();
        let orders = ArmaOrders::new(0, 0, 1).unwrap();
        let c = ArmaCascade::constant(g, orders, ArmaFrame::identity(0.1, orders)).unwrap();
        let y = synthesize_arma(&c, &f0, &ComponentRule::default()).unwrap();
        let power = y.samples().iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        // 119 components of amplitude 0.1, each contributing 2 A^2
        let expected = 119.0 * 2.0 * 0.01;
        assert!((power / expected - 1.0).abs() < 0.05, "{power} vs {expected}");
    }

    #[test]
    fn bit_identical_across_thread_counts() {
        let tr = constant_tracks(&[100.0, 250.0, 333.0], &[0.2, 0.3, 0.1], &[0.0, 1.0, 2.0], 400, 0.005);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| render(&tr, 24000).unwrap());
        let b = four.install(|| render(&tr, 24000).unwrap());
        assert!(a.samples().iter().zip(b.samples()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    proptest! {
        #[test]
        fn constant_phase_shift_keeps_amplitude_track(delta in -3.0f64..3.0) {
            let tr = constant_tracks(&[150.0, 310.0], &[0.3, 0.2], &[0.1, 0.5], 30, 0.005);
            let mut shifted = tr.clone();
            shifted.phases.iter_mut().flatten().for_each(|p| *p += delta);
            for k in 0..2 {
                let (a0, p0) = tr.component_track(k, 24000.0).unwrap();
                let (a1, p1) = shifted.component_track(k, 24000.0).unwrap();
                prop_assert_eq!(&a0, &a1);
                for (x, y) in p0.iter().zip(&p1) {
                    prop_assert!((y - x - delta).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn interpolated_frequency_has_no_jumps(f1 in 100.0f64..300.0, f2 in 100.0f64..300.0) {
            // a frequency step between frames becomes a smooth glide: no
            // sample-to-sample jump, and at most a tenth of the step of
            // overshoot outside the knot range
            let n = 20;
            let times: Vec<f64> = (0..n).map(|l| l as f64 * 0.005).collect();
            let freqs: Vec<f64> = (0..n).map(|l| if l < n / 2 { f1 } else { f2 }).collect();
            let exc = excitation_phase(&freqs.iter().map(|f| vec![*f]).collect::<Vec<_>>(), &times).unwrap();
            let tr = FrameTracks {
                times,
                frequencies: freqs.iter().map(|f| vec![*f]).collect(),
                amplitudes: vec![vec![1.0]; n],
                phases: exc,
            };
            let (_, p) = tr.component_track(0, 24000.0).unwrap();
            let (lo, hi) = (f1.min(f2), f1.max(f2));
            let jump = hi - lo;
            let inst: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]) * 24000.0 / (2.0 * PI)).collect();
            for f in &inst {
                prop_assert!(*f >= lo - 0.1 * jump - 1e-6 && *f <= hi + 0.1 * jump + 1e-6);
            }
            // one frame is 120 samples; the glide spans at least one frame
            for w in inst.windows(2) {
                prop_assert!((w[1] - w[0]).abs() <= 4.0 * jump / 120.0 + 1e-6);
            }
        }
    }
}
