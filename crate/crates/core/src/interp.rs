//! Framewise-to-instantaneous interpolation.
//!
//! Amplitudes are interpolated linearly; phases with a monotone piecewise
//! cubic Hermite interpolant (Fritsch–Carlson slopes), which is C1 and never
//! introduces extrema that the knots do not have. Queries outside the knot
//! range hold the endpoint value.

use crate::error::{invalid, Result};

fn check_knots(times: &[f64], values: &[f64], min: usize) -> Result<()> {
    if times.len() != values.len() {
        return Err(invalid(format!(
            "{} knot times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < min {
        return Err(invalid(format!("need at least {min} knots, got {}", times.len())));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("knot times must be strictly increasing"));
    }
    Ok(())
}

/// Index `i` of the segment `[times[i], times[i + 1]]` containing `t`
/// (clamped to the valid range).
fn segment(times: &[f64], t: f64) -> usize {
    let n = times.len();
    match times.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    }
}

pub fn linear_interp(times: &[f64], values: &[f64], queries: &[f64]) -> Result<Vec<f64>> {
    check_knots(times, values, 1)?;
    let n = times.len();
    Ok(queries
        .iter()
        .map(|&t| {
            if n == 1 || t <= times[0] {
                return values[0];
            }
            if t >= times[n - 1] {
                return values[n - 1];
            }
            let i = segment(times, t);
            let u = (t - times[i]) / (times[i + 1] - times[i]);
            values[i] + u * (values[i + 1] - values[i])
        })
        .collect())
}

/// Monotone piecewise-cubic Hermite interpolant.
#[derive(Debug, Clone)]
pub struct Pchip {
    times: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(times: &[f64], values: &[f64]) -> Result<Self> {
        check_knots(times, values, 2)?;
        let slopes = pchip_slopes(times, values);
        Ok(Self {
            times: times.to_vec(),
            values: values.to_vec(),
            slopes,
        })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = segment(&self.times, t);
        hermite(
            self.times[i],
            self.times[i + 1],
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            t,
        )
    }
}

/// Fritsch–Carlson / Fritsch–Butland knot derivatives with the usual
/// shape-preserving three-point end conditions.
pub fn pchip_slopes(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = values
        .windows(2)
        .zip(&h)
        .map(|(v, h)| (v[1] - v[0]) / h)
        .collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (d0, d1) = (delta[k - 1], delta[k]);
        if d0 == d1 {
            d[k] = d0;
        } else if d0 * d1 > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[inline]
pub(crate) fn hermite(t0: f64, t1: f64, v0: f64, v1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * v0 + h10 * h * m0 + h01 * v1 + h11 * h * m1
}

pub fn cubic_interp(times: &[f64], values: &[f64], queries: &[f64]) -> Result<Vec<f64>> {
    let p = Pchip::new(times, values)?;
    Ok(queries.iter().map(|&t| p.eval(t)).collect())
}
