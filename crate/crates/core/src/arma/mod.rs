//! Cascaded mini-ARMA spectral envelopes.
//!
//! A frame's envelope is `H(w) = G * prod_j B_j(w) / A_j(w)` with
//! `B_j(w) = 1 + sum_q b_{j,q} e^{-iwq}` and `A_j(w) = 1 + sum_p a_{j,p} e^{-iwp}`.
//! Because every section's angle lies in [-pi, pi], the summed phase delay of
//! an r-section cascade spans [-r pi, r pi].

mod envelope;
mod fit;
mod stability;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::FrameGrid;

pub use envelope::{fit_cascade, targets_from_harmonics, CascadeFit};
pub use fit::{fit_frame, FitMethod, FitOptions, FitOutcome, FitTarget};
pub use stability::{ar_roots, is_stable_with_margin, poly_from_roots, project_stable, PROJECTED_RADIUS, STABILITY_MARGIN};

/// Smallest denominator modulus accepted when evaluating a response.
pub const SINGULAR_LIMIT: f64 = 1e-12;

/// Global model orders: `p` AR and `q` MA coefficients split evenly over `r`
/// sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmaOrders {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl ArmaOrders {
    pub fn new(p: usize, q: usize, r: usize) -> Result<Self> {
        if r == 0 || p % r != 0 || q % r != 0 {
            return Err(invalid(format!("r = {r} must divide P = {p} and Q = {q}")));
        }
        Ok(Self { p, q, r })
    }

    pub fn ar_per_section(&self) -> usize {
        self.p / self.r
    }

    pub fn ma_per_section(&self) -> usize {
        self.q / self.r
    }

    /// Number of free parameters including the gain.
    pub fn n_params(&self) -> usize {
        self.p + self.q + 1
    }
}

impl Default for ArmaOrders {
    fn default() -> Self {
        Self { p: 128, q: 128, r: 8 }
    }
}

impl std::str::FromStr for ArmaOrders {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| invalid(format!("orders must be 'P,Q,r', got '{s}'")))?;
        match parts.as_slice() {
            [p, q, r] => Self::new(*p, *q, *r),
            _ => Err(invalid(format!("orders must be 'P,Q,r', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmaSection {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
}

impl ArmaSection {
    pub fn new(ar: Vec<f64>, ma: Vec<f64>) -> Self {
        Self { ar, ma }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    fn is_finite(&self) -> bool {
        self.ar.iter().chain(&self.ma).all(|v| v.is_finite())
    }
}

/// Envelope of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaFrame {
    pub gain: f64,
    pub sections: Vec<ArmaSection>,
}

impl ArmaFrame {
    pub fn identity(gain: f64, orders: ArmaOrders) -> Self {
        Self {
            gain,
            sections: (0..orders.r)
                .map(|_| ArmaSection::new(vec![0.0; orders.ar_per_section()], vec![0.0; orders.ma_per_section()]))
                .collect(),
        }
    }

    pub fn check(&self, orders: ArmaOrders) -> Result<()> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(invalid(format!("gain {} must be positive and finite", self.gain)));
        }
        if self.sections.len() != orders.r {
            return Err(Error::LengthMismatch {
                what: "sections vs r",
                left: self.sections.len(),
                right: orders.r,
            });
        }
        for s in &self.sections {
            if s.ar.len() != orders.ar_per_section() || s.ma.len() != orders.ma_per_section() {
                return Err(invalid("section coefficient count does not match orders"));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("ARMA coefficients"));
            }
            if !is_stable_with_margin(&s.ar, 0.0) {
                return Err(invalid("AR polynomial has roots on or outside the unit circle"));
            }
        }
        Ok(())
    }
}

/// Per-frame envelopes over a frame grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaCascade {
    pub grid: FrameGrid,
    pub orders: ArmaOrders,
    pub frames: Vec<ArmaFrame>,
}

impl ArmaCascade {
    pub fn new(grid: FrameGrid, orders: ArmaOrders, frames: Vec<ArmaFrame>) -> Result<Self> {
        let c = Self { grid, orders, frames };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ArmaOrders::new(self.orders.p, self.orders.q, self.orders.r)?;
        if self.frames.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                what: "cascade frames vs grid",
                left: self.frames.len(),
                right: self.grid.len(),
            });
        }
        self.frames.iter().try_for_each(|f| f.check(self.orders))
    }

    /// Same envelope on every frame.
    pub fn constant(grid: FrameGrid, orders: ArmaOrders, frame: ArmaFrame) -> Result<Self> {
        let frames = vec![frame; grid.len()];
        Self::new(grid, orders, frames)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

fn poly_at(coeffs: &[f64], omega: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -omega);
    let mut z = step;
    let mut acc = Complex64::new(1.0, 0.0);
    for &c in coeffs {
        acc += c * z;
        z *= step;
    }
    acc
}

/// `(1 + sum b_q e^{-iwq}) / (1 + sum a_p e^{-iwp})`, omega in rad/sample.
pub fn section_response(section: &ArmaSection, omega: f64) -> Result<Complex64> {
    let den = poly_at(&section.ar, omega);
    if den.norm() < SINGULAR_LIMIT {
        return Err(Error::SingularResponse {
            omega,
            magnitude: den.norm(),
        });
    }
    Ok(poly_at(&section.ma, omega) / den)
}

pub fn cascade_response(frame: &ArmaFrame, omega: f64) -> Result<Complex64> {
    frame
        .sections
        .iter()
        .try_fold(Complex64::new(frame.gain, 0.0), |acc, s| Ok(acc * section_response(s, omega)?))
}

/// Envelope sampled at component frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSample {
    pub magnitudes: Vec<f64>,
    /// Sum of per-section angles, not re-wrapped.
    pub delays: Vec<f64>,
}

pub fn sample_harmonics(frame: &ArmaFrame, freqs: &[f64], sample_rate: f64) -> Result<EnvelopeSample> {
    let nyquist = sample_rate / 2.0;
    let mut magnitudes = Vec::with_capacity(freqs.len());
    let mut delays = Vec::with_capacity(freqs.len());
    for &f in freqs {
        if !(f.abs() < nyquist) {
            return Err(invalid(format!("frequency {f} not below Nyquist")));
        }
        let omega = 2.0 * PI * f / sample_rate;
        let mut mag = frame.gain;
        let mut delay = 0.0;
        for s in &frame.sections {
            let h = section_response(s, omega)?;
            mag *= h.norm();
            delay += h.arg();
        }
        magnitudes.push(mag);
        delays.push(delay);
    }
    Ok(EnvelopeSample { magnitudes, delays })
}

/// Run `input` through every section's difference equation (zero initial
/// state, index order) and apply the gain.
pub fn filter_time_domain(frame: &ArmaFrame, input: &[f64]) -> Result<Vec<f64>> {
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("filter input"));
    }
    let mut x = input.to_vec();
    for s in &frame.sections {
        let mut y = vec![0.0; x.len()];
        for n in 0..x.len() {
            let mut acc = x[n];
            for (q, b) in s.ma.iter().enumerate() {
                if n > q {
                    acc += b * x[n - q - 1];
                }
            }
            for (p, a) in s.ar.iter().enumerate() {
                if n > p {
                    acc -= a * y[n - p - 1];
                }
            }
            y[n] = acc;
        }
        x = y;
    }
    for v in &mut x {
        *v *= frame.gain;
    }
    Ok(x)
}

/// Frequency correction implied by frame-to-frame changes of the phase delay
/// of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionCapacity {
    /// Hz, one entry per frame transition (frames 1..L).
    pub per_frame: Vec<f64>,
    pub cumulative: f64,
    /// `r / frame_shift`.
    pub bound: f64,
}

impl CorrectionCapacity {
    pub fn within_bound(&self) -> bool {
        self.cumulative.abs() <= self.bound + 1e-9
    }
}

/// `component_freqs[l]` is the component's frequency (Hz) at frame `l`.
pub fn correction_capacity(
    cascade: &ArmaCascade,
    component_freqs: &[f64],
    frame_shift: f64,
) -> Result<CorrectionCapacity> {
    let n = cascade.n_frames();
    if n < 2 {
        return Err(invalid("need at least two frames"));
    }
    if component_freqs.len() != n {
        return Err(Error::LengthMismatch {
            what: "component frequencies vs frames",
            left: component_freqs.len(),
            right: n,
        });
    }
    let fs = cascade.grid.sample_rate() as f64;
    let delays = cascade
        .frames
        .iter()
        .zip(component_freqs)
        .map(|(fr, &f)| Ok(sample_harmonics(fr, &[f], fs)?.delays[0]))
        .collect::<Result<Vec<f64>>>()?;
    let per_frame: Vec<f64> = delays
        .windows(2)
        .map(|d| (d[1] - d[0]) / (2.0 * PI * frame_shift))
        .collect();
    Ok(CorrectionCapacity {
        cumulative: per_frame.iter().sum(),
        per_frame,
        bound: cascade.orders.r as f64 / frame_shift,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::signal::WindowKind;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize) -> FrameGrid {
        FrameGrid::new((0..n).map(|l| l as f64 * 0.005).collect(), 0.005, 0.01, WindowKind::Hann, 24000).unwrap()
    }

    #[test]
    fn section_closed_forms() {
        let id = ArmaSection::identity();
        for w in [0.0, 0.3, 2.0, PI] {
            assert_eq!(section_response(&id, w).unwrap(), Complex64::new(1.0, 0.0));
        }
        let pole = ArmaSection::new(vec![-0.9], vec![]);
        assert_abs_diff_eq!(section_response(&pole, 0.0).unwrap().re, 10.0, epsilon = 1e-12);
        let zero = ArmaSection::new(vec![], vec![-1.0]);
        assert_abs_diff_eq!(section_response(&zero, 0.0).unwrap().norm(), 0.0, epsilon = 1e-15);
        let singular = ArmaSection::new(vec![-1.0], vec![]);
        assert!(matches!(section_response(&singular, 0.0), Err(Error::SingularResponse { .. })));
    }

    #[test]
    fn cascade_closed_forms() {
        let gain_only = ArmaFrame { gain: 2.0, sections: vec![ArmaSection::identity()] };
        assert_eq!(cascade_response(&gain_only, 1.3).unwrap(), Complex64::new(2.0, 0.0));
        let two = ArmaFrame {
            gain: 1.0,
            sections: vec![ArmaSection::new(vec![-0.5], vec![]), ArmaSection::new(vec![-0.5], vec![])],
        };
        assert_abs_diff_eq!(cascade_response(&two, 0.0).unwrap().re, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn sample_identity_and_real_axis() {
        let id = ArmaFrame::identity(0.7, ArmaOrders::new(4, 4, 2).unwrap());
        let s = sample_harmonics(&id, &[100.0, 200.0, 300.0], 24000.0).unwrap();
        assert_eq!(s.magnitudes, vec![0.7; 3]);
        assert_eq!(s.delays, vec![0.0; 3]);
        let pole = ArmaFrame { gain: 1.0, sections: vec![ArmaSection::new(vec![-0.3], vec![])] };
        let s = sample_harmonics(&pole, &[0.0], 24000.0).unwrap();
        assert_eq!(s.delays[0], 0.0);
        assert!(sample_harmonics(&pole, &[12000.0], 24000.0).is_err());
    }

    #[test]
    fn sample_matches_termwise_evaluation() {
        let frame = ArmaFrame {
            gain: 0.8,
            sections: vec![
                ArmaSection::new(vec![-1.2, 0.5], vec![0.3, 0.1]),
                ArmaSection::new(vec![0.4, 0.2], vec![-0.5, 0.25]),
            ],
        };
        let fs = 16000.0;
        let freqs = [250.0, 1000.0, 3333.0];
        let s = sample_harmonics(&frame, &freqs, fs).unwrap();
        for (i, f) in freqs.iter().enumerate() {
            let w = 2.0 * PI * f / fs;
            let e = |k: f64| Complex64::new((w * k).cos(), -(w * k).sin());
            let h1 = (1.0 + 0.3 * e(1.0) + 0.1 * e(2.0)) / (1.0 - 1.2 * e(1.0) + 0.5 * e(2.0));
            let h2 = (1.0 - 0.5 * e(1.0) + 0.25 * e(2.0)) / (1.0 + 0.4 * e(1.0) + 0.2 * e(2.0));
            assert_abs_diff_eq!(s.magnitudes[i], 0.8 * h1.norm() * h2.norm(), epsilon = 1e-12);
            assert_abs_diff_eq!(s.delays[i], h1.arg() + h2.arg(), epsilon = 1e-12);
        }
    }

    #[test]
    fn filter_gain_and_impulse() {
        let id = ArmaFrame::identity(3.0, ArmaOrders::new(2, 2, 1).unwrap());
        assert_eq!(filter_time_domain(&id, &[1.0, -2.0, 0.5]).unwrap(), vec![3.0, -6.0, 1.5]);
        let pole = ArmaFrame { gain: 1.0, sections: vec![ArmaSection::new(vec![-0.9], vec![])] };
        let mut imp = vec![0.0; 50];
        imp[0] = 1.0;
        let h = filter_time_domain(&pole, &imp).unwrap();
        for (n, v) in h.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.9f64.powi(n as i32), epsilon = 1e-12);
        }
        assert!(filter_time_domain(&pole, &[f64::NAN]).is_err());
    }

    pub(crate) fn random_stable_frame(rng: &mut impl Rng, orders: ArmaOrders, max_radius: f64) -> ArmaFrame {
        let sections = (0..orders.r)
            .map(|_| {
                ArmaSection::new(
                    stability::tests::random_poly(rng, orders.ar_per_section(), max_radius),
                    stability::tests::random_poly(rng, orders.ma_per_section(), 1.2),
                )
            })
            .collect();
        ArmaFrame { gain: rng.random_range(0.1..2.0), sections }
    }

    /// Noise through the cascade: the ratio of output and input spectra at
    /// DFT bins equals |H| because the tail is negligible and zero state
    /// matches the circular convolution once the impulse response has decayed.
    #[test]
    fn noise_spectrum_ratio() {
        use rustfft::FftPlanner;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let orders = ArmaOrders::new(4, 4, 2).unwrap();
        let frame = random_stable_frame(&mut rng, orders, 0.8);
        let n = 1 << 14;
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // zero tail so the linear convolution fits inside the DFT length
        for v in x.iter_mut().skip(n - 2048) {
            *v = 0.0;
        }
        let y = filter_time_domain(&frame, &x).unwrap();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut xs: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        let mut ys: Vec<Complex64> = y.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        fft.process(&mut xs);
        fft.process(&mut ys);
        for bin in (1..n / 2).step_by(97) {
            if xs[bin].norm() < 1.0 {
                continue;
            }
            let w = 2.0 * PI * bin as f64 / n as f64;
            let h = cascade_response(&frame, w).unwrap();
            let ratio = ys[bin] / xs[bin];
            assert!((ratio - h).norm() <= 1e-6 * h.norm().max(1e-3), "bin {bin}");
        }
    }

    #[test]
    fn capacity_time_invariant_is_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let orders = ArmaOrders::new(4, 4, 2).unwrap();
        let c = ArmaCascade::constant(grid(6), orders, random_stable_frame(&mut rng, orders, 0.9)).unwrap();
        let cap = correction_capacity(&c, &[440.0; 6], 0.005).unwrap();
        assert!(cap.per_frame.iter().all(|d| *d == 0.0));
        assert_eq!(cap.cumulative, 0.0);
    }

    #[test]
    fn capacity_quarter_turn() {
        // at w = pi / 2 the section below is (0.5 + 0.5i) / (0.5 - 0.5i) = i
        let fs = 24000.0;
        let f = 6000.0;
        let flat = ArmaFrame { gain: 1.0, sections: vec![ArmaSection::new(vec![0.0; 2], vec![0.0; 2])] };
        let quarter = ArmaFrame { gain: 1.0, sections: vec![ArmaSection::new(vec![0.5, 0.5], vec![-0.5, 0.5])] };
        let d = sample_harmonics(&quarter, &[f], fs).unwrap().delays[0];
        assert_abs_diff_eq!(d, PI / 2.0, epsilon = 1e-12);
        let c = ArmaCascade::new(grid(2), ArmaOrders::new(2, 2, 1).unwrap(), vec![flat, quarter]).unwrap();
        let cap = correction_capacity(&c, &[f, f], 0.005).unwrap();
        assert_abs_diff_eq!(cap.cumulative, 1.0 / (4.0 * 0.005), epsilon = 1e-9);
        assert!(cap.within_bound());
    }

    #[test]
    fn capacity_telescopes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let orders = ArmaOrders::new(8, 8, 4).unwrap();
        let frames: Vec<ArmaFrame> = (0..12).map(|_| random_stable_frame(&mut rng, orders, 0.95)).collect();
        let c = ArmaCascade::new(grid(12), orders, frames).unwrap();
        let f = vec![1234.0; 12];
        let cap = correction_capacity(&c, &f, 0.005).unwrap();
        let first = sample_harmonics(&c.frames[0], &[1234.0], 24000.0).unwrap().delays[0];
        let last = sample_harmonics(&c.frames[11], &[1234.0], 24000.0).unwrap().delays[0];
        assert_abs_diff_eq!(cap.cumulative, (last - first) / (2.0 * PI * 0.005), epsilon = 1e-9);
        assert!(cap.within_bound());
    }

    #[test]
    fn orders_parse_and_validate() {
        assert_eq!("128,128,8".parse::<ArmaOrders>().unwrap(), ArmaOrders::default());
        assert!("10,10,3".parse::<ArmaOrders>().is_err());
        assert!("10,10".parse::<ArmaOrders>().is_err());
        assert!(ArmaOrders::new(0, 0, 1).is_ok());
    }
}
