//! Windowed least-squares fit of complex amplitudes and slopes.
//!
//! Real-signal form: component k contributes `2 Re[(a_k + t b_k) e^{i theta_k(t)}]`,
//! i.e. the conjugate pair at -f_k is implied. Unknowns are stored per
//! component as `[Re a, Im a, Re b, Im b]`.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::signal::Frame;

/// Jacobi-scaled condition estimate above which the normal equations are
/// ridge regularized.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Ridge weight relative to the trace of the scaled normal matrix.
pub const RIDGE_FACTOR: f64 = 1e-8;

/// Least-squares result for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct QhmFrameParams {
    pub frame_index: usize,
    /// Frequencies the basis was built on (Hz).
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub slopes: Vec<Complex64>,
    /// Weighted squared error of the fitted model.
    pub residual: f64,
    /// Jacobi-scaled condition estimate of the normal matrix.
    pub condition: f64,
    pub regularized: bool,
}

impl QhmFrameParams {
    pub fn n_components(&self) -> usize {
        self.frequencies.len()
    }
}

/// Phase basis of the model.
#[derive(Debug, Clone, Copy)]
pub enum Basis<'a> {
    /// `theta_k(t) = 2 pi f_k t`.
    Stationary,
    /// Per-component phase `Phi_k(t_n)` sampled at the frame times, with an
    /// optional per-component amplitude amplifier.
    Adaptive {
        phases: &'a [Vec<f64>],
        amplifiers: Option<&'a [Vec<f64>]>,
    },
}

/// QHM fit on the stationary basis. Needs at least `4K` weighted samples.
pub fn qhm_ls_fit(frame: &Frame, f_hats: &[f64], sample_rate: f64) -> Result<QhmFrameParams> {
    check_frequencies(f_hats, sample_rate)?;
    let required = 4 * f_hats.len();
    let available = frame.effective_len();
    if available < required {
        return Err(Error::WindowTooShort {
            frame: frame.index,
            available,
            required,
        });
    }
    if frame.is_symmetric() {
        if let Some(f0) = common_fundamental(f_hats) {
            return fit_harmonic_symmetric(frame, f0, f_hats);
        }
    }
    fit_with_basis(frame, f_hats, Basis::Stationary, true)
}

/// Fit with an explicit basis. With `with_slope = false` only `a_k` is solved
/// (2K unknowns) and all slopes are zero.
pub fn fit_with_basis(
    frame: &Frame,
    f_hats: &[f64],
    basis: Basis<'_>,
    with_slope: bool,
) -> Result<QhmFrameParams> {
    let k_count = f_hats.len();
    let per = if with_slope { 4 } else { 2 };
    let m = per * k_count;
    if let Basis::Adaptive { phases, amplifiers } = basis {
        if phases.len() != k_count || amplifiers.is_some_and(|a| a.len() != k_count) {
            return Err(invalid("adaptive basis does not match component count"));
        }
    }
    let rows: Vec<usize> = (0..frame.samples.len())
        .filter(|&n| frame.weights[n] > 0.0)
        .collect();
    if k_count == 0 {
        let residual = rows
            .iter()
            .map(|&n| (frame.weights[n] * frame.samples[n]).powi(2))
            .sum();
        return Ok(empty_params(frame.index, residual));
    }
    let mut x = DMatrix::<f64>::zeros(rows.len(), m);
    let mut y = DVector::<f64>::zeros(rows.len());
    for (r, &n) in rows.iter().enumerate() {
        let w = frame.weights[n];
        let t = frame.times[n];
        y[r] = w * frame.samples[n];
        for k in 0..k_count {
            let (theta, amp) = match basis {
                Basis::Stationary => (2.0 * std::f64::consts::PI * f_hats[k] * t, 1.0),
                Basis::Adaptive { phases, amplifiers } => {
                    (phases[k][n], amplifiers.map_or(1.0, |a| a[k][n]))
                }
            };
            let (s, c) = theta.sin_cos();
            let g = 2.0 * w * amp;
            x[(r, per * k)] = g * c;
            x[(r, per * k + 1)] = -g * s;
            if with_slope {
                x[(r, per * k + 2)] = g * t * c;
                x[(r, per * k + 3)] = -g * t * s;
            }
        }
    }
    let gram = x.transpose() * &x;
    let rhs = x.transpose() * &y;
    let (theta, condition, regularized) =
        solve_normal(gram, rhs).ok_or(Error::SingularSystem { frame: frame.index })?;
    let fitted = &x * &theta;
    let residual = (&y - fitted).norm_squared();
    let mut amplitudes = Vec::with_capacity(k_count);
    let mut slopes = Vec::with_capacity(k_count);
    for k in 0..k_count {
        amplitudes.push(Complex64::new(theta[per * k], theta[per * k + 1]));
        slopes.push(if with_slope {
            Complex64::new(theta[per * k + 2], theta[per * k + 3])
        } else {
            Complex64::new(0.0, 0.0)
        });
    }
    Ok(QhmFrameParams {
        frame_index: frame.index,
        frequencies: f_hats.to_vec(),
        amplitudes,
        slopes,
        residual,
        condition,
        regularized,
    })
}

fn empty_params(frame_index: usize, residual: f64) -> QhmFrameParams {
    QhmFrameParams {
        frame_index,
        frequencies: Vec::new(),
        amplitudes: Vec::new(),
        slopes: Vec::new(),
        residual,
        condition: 1.0,
        regularized: false,
    }
}

pub(crate) fn check_frequencies(f_hats: &[f64], sample_rate: f64) -> Result<()> {
    let nyquist = sample_rate / 2.0;
    for (k, &f) in f_hats.iter().enumerate() {
        if !(f.is_finite() && f.abs() < nyquist) {
            return Err(invalid(format!("frequency {f} of component {k} not below Nyquist")));
        }
    }
    let mut sorted = f_hats.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("component frequencies must be distinct"));
    }
    Ok(())
}

/// `Some(f0)` when `f_hats[k] == (k + 1) * f0` for every k.
fn common_fundamental(f_hats: &[f64]) -> Option<f64> {
    let f0 = *f_hats.first()?;
    if f0 <= 0.0 {
        return None;
    }
    f_hats
        .iter()
        .enumerate()
        .all(|(k, &f)| (f - (k + 1) as f64 * f0).abs() <= 1e-12 * f.abs())
        .then_some(f0)
}

/// Solve `G x = r` after Jacobi scaling; falls back to a ridge term when the
/// scaled matrix is ill-conditioned or not positive definite.
fn solve_normal(gram: DMatrix<f64>, rhs: DVector<f64>) -> Option<(DVector<f64>, f64, bool)> {
    let m = gram.nrows();
    let scale: Vec<f64> = (0..m)
        .map(|i| {
            let d = gram[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut g = gram;
    for j in 0..m {
        for i in 0..m {
            g[(i, j)] *= scale[i] * scale[j];
        }
    }
    let r = DVector::from_iterator(m, (0..m).map(|i| rhs[i] * scale[i]));
    let trace: f64 = (0..m).map(|i| g[(i, i)]).sum();

    let attempt = |g: DMatrix<f64>| -> Option<(DVector<f64>, f64)> {
        let chol = Cholesky::new(g)?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..m {
            let d = l[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let cond = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
        Some((chol.solve(&r), cond))
    };

    let unscale = |mut x: DVector<f64>| {
        for i in 0..m {
            x[i] *= scale[i];
        }
        x
    };

    let mut ridged = g.clone();
    if let Some((x, cond)) = attempt(g) {
        if cond <= CONDITION_LIMIT && x.iter().all(|v| v.is_finite()) {
            return Some((unscale(x), cond, false));
        }
    }
    let lambda = RIDGE_FACTOR * trace.max(f64::MIN_POSITIVE);
    for i in 0..m {
        ridged[(i, i)] += lambda;
    }
    let (x, cond) = attempt(ridged)?;
    x.iter().all(|v| v.is_finite()).then(|| (unscale(x), cond, true))
}

/// Closed-form normal equations for harmonic frequencies `k f0` on a
/// symmetric window. The even unknowns (Re a, Im b) decouple from the odd
/// ones (Im a, Re b), so two half-size systems are solved.
fn fit_harmonic_symmetric(frame: &Frame, f0: f64, f_hats: &[f64]) -> Result<QhmFrameParams> {
    let k_count = f_hats.len();
    let n = frame.samples.len();
    let w0 = 2.0 * std::f64::consts::PI * f0;
    let mmax = 2 * k_count;

    // c0[m] = sum w^2 cos(m w0 t), c2[m] = sum w^2 t^2 cos(..), s1[m] = sum w^2 t sin(..)
    let mut c0 = vec![0.0; mmax + 1];
    let mut c2 = vec![0.0; mmax + 1];
    let mut s1 = vec![0.0; mmax + 1];
    // rhs per component: projections of w^2 x onto cos / sin / t cos / t sin
    let mut pc = vec![0.0; k_count];
    let mut ps = vec![0.0; k_count];
    let mut ptc = vec![0.0; k_count];
    let mut pts = vec![0.0; k_count];
    for i in 0..n {
        let w2 = frame.weights[i] * frame.weights[i];
        if w2 == 0.0 {
            continue;
        }
        let t = frame.times[i];
        let wx = w2 * frame.samples[i];
        let (sb, cb) = (w0 * t).sin_cos();
        let (mut s, mut c) = (0.0f64, 1.0f64);
        for m in 0..=mmax {
            c0[m] += w2 * c;
            c2[m] += w2 * t * t * c;
            s1[m] += w2 * t * s;
            if m >= 1 && m <= k_count {
                pc[m - 1] += wx * c;
                ps[m - 1] += wx * s;
                ptc[m - 1] += wx * t * c;
                pts[m - 1] += wx * t * s;
            }
            let cn = c * cb - s * sb;
            s = s * cb + c * sb;
            c = cn;
        }
    }
    let s1_signed = |d: isize| -> f64 {
        if d >= 0 {
            s1[d as usize]
        } else {
            -s1[(-d) as usize]
        }
    };

    // even block: [aR_0..aR_{K-1}, bI_0..bI_{K-1}]
    let mut ge = DMatrix::<f64>::zeros(2 * k_count, 2 * k_count);
    let mut go = DMatrix::<f64>::zeros(2 * k_count, 2 * k_count);
    for j in 0..k_count {
        for k in 0..k_count {
            let (hj, hk) = (j + 1, k + 1);
            let dm = (hj as isize - hk as isize).unsigned_abs();
            let sm = hj + hk;
            let d = hj as isize - hk as isize;
            ge[(j, k)] = 2.0 * (c0[dm] + c0[sm]);
            ge[(k_count + j, k_count + k)] = 2.0 * (c2[dm] - c2[sm]);
            // <2 cos_j, -2 t sin_k>
            ge[(j, k_count + k)] = -2.0 * (s1[sm] - s1_signed(d));
            ge[(k_count + k, j)] = ge[(j, k_count + k)];

            go[(j, k)] = 2.0 * (c0[dm] - c0[sm]);
            go[(k_count + j, k_count + k)] = 2.0 * (c2[dm] + c2[sm]);
            // <-2 sin_j, 2 t cos_k>
            go[(j, k_count + k)] = -2.0 * (s1[sm] + s1_signed(d));
            go[(k_count + k, j)] = go[(j, k_count + k)];
        }
    }
    let mut re = DVector::<f64>::zeros(2 * k_count);
    let mut ro = DVector::<f64>::zeros(2 * k_count);
    for k in 0..k_count {
        re[k] = 2.0 * pc[k];
        re[k_count + k] = -2.0 * pts[k];
        ro[k] = -2.0 * ps[k];
        ro[k_count + k] = 2.0 * ptc[k];
    }
    let (xe, ce, rege) =
        solve_normal(ge, re).ok_or(Error::SingularSystem { frame: frame.index })?;
    let (xo, co, rego) =
        solve_normal(go, ro).ok_or(Error::SingularSystem { frame: frame.index })?;

    let amplitudes: Vec<Complex64> = (0..k_count).map(|k| Complex64::new(xe[k], xo[k])).collect();
    let slopes: Vec<Complex64> = (0..k_count)
        .map(|k| Complex64::new(xo[k_count + k], xe[k_count + k]))
        .collect();
    let residual = model_residual(frame, f_hats, &amplitudes, &slopes);
    Ok(QhmFrameParams {
        frame_index: frame.index,
        frequencies: f_hats.to_vec(),
        amplitudes,
        slopes,
        residual,
        condition: ce.max(co),
        regularized: rege || rego,
    })
}

/// Weighted squared error of the stationary model against the frame.
pub fn model_residual(frame: &Frame, f_hats: &[f64], a: &[Complex64], b: &[Complex64]) -> f64 {
    let omegas: Vec<f64> = f_hats.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
    (0..frame.samples.len())
        .filter(|&n| frame.weights[n] > 0.0)
        .map(|n| {
            let t = frame.times[n];
            let model: f64 = omegas
                .iter()
                .zip(a.iter().zip(b))
                .map(|(&w, (a, b))| {
                    let (s, c) = (w * t).sin_cos();
                    let z = a + b * t;
                    2.0 * (z.re * c - z.im * s)
                })
                .sum();
            (frame.weights[n] * (frame.samples[n] - model)).powi(2)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{make_window, WindowKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const FS: f64 = 24000.0;

    fn frame_of(f: impl Fn(f64) -> f64, len: usize) -> Frame {
        let w = make_window(WindowKind::Hann, len).unwrap();
        let half = (len as f64 - 1.0) / 2.0;
        let x = (0..len).map(|n| f((n as f64 - half) / FS)).collect();
        Frame::centered(0, x, &w, FS).unwrap()
    }

    #[test]
    fn exact_cosine() {
        let (a, phi) = (0.7, 0.4);
        let fr = frame_of(|t| a * (2.0 * PI * 200.0 * t + phi).cos(), 481);
        let p = qhm_ls_fit(&fr, &[200.0], FS).unwrap();
        let expect = Complex64::from_polar(a / 2.0, phi);
        assert_abs_diff_eq!(p.amplitudes[0].re, expect.re, epsilon = 1e-10);
        assert_abs_diff_eq!(p.amplitudes[0].im, expect.im, epsilon = 1e-10);
        assert!(p.slopes[0].norm() <= 1e-6 * a);
    }

    #[test]
    fn zero_frame() {
        let fr = frame_of(|_| 0.0, 481);
        let p = qhm_ls_fit(&fr, &[100.0, 200.0, 300.0], FS).unwrap();
        assert!(p.amplitudes.iter().chain(&p.slopes).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn too_short_window() {
        let fr = frame_of(|t| t, 11);
        assert!(matches!(
            qhm_ls_fit(&fr, &[100.0, 200.0, 300.0], FS),
            Err(Error::WindowTooShort { required: 12, .. })
        ));
    }

    #[test]
    fn rejects_bad_frequencies() {
        let fr = frame_of(|t| t, 101);
        assert!(qhm_ls_fit(&fr, &[100.0, 100.0], FS).is_err());
        assert!(qhm_ls_fit(&fr, &[12000.0], FS).is_err());
    }

    /// Harmonic fast path and the explicit design-matrix path must agree.
    #[test]
    fn fast_path_matches_general() {
        let x = |t: f64| {
            (1..=6)
                .map(|k| (1.0 / k as f64) * (2.0 * PI * 151.3 * k as f64 * t + 0.3 * k as f64).cos())
                .sum::<f64>()
                + 0.01 * (2.0 * PI * 977.0 * t).sin()
        };
        let fr = frame_of(x, 481);
        let f: Vec<f64> = (1..=20).map(|k| 150.0 * k as f64).collect();
        let fast = qhm_ls_fit(&fr, &f, FS).unwrap();
        let slow = fit_with_basis(&fr, &f, Basis::Stationary, true).unwrap();
        for k in 0..f.len() {
            assert!((fast.amplitudes[k] - slow.amplitudes[k]).norm() < 1e-9);
            assert!((fast.slopes[k] - slow.slopes[k]).norm() < 1e-6);
        }
        assert!((fast.residual - slow.residual).abs() < 1e-9 * (1.0 + slow.residual));
    }

    /// Independent oracle: solve the complex normal equations over the
    /// conjugate-pair basis with plain Gaussian elimination.
    fn oracle_fit(fr: &Frame, f: f64) -> (Complex64, Complex64) {
        // real unknowns [aR, aI, bR, bI]
        let mut g = [[0.0f64; 4]; 4];
        let mut r = [0.0f64; 4];
        for n in 0..fr.samples.len() {
            let t = fr.times[n];
            let w2 = fr.weights[n].powi(2);
            let th = 2.0 * PI * f * t;
            let cols = [2.0 * th.cos(), -2.0 * th.sin(), 2.0 * t * th.cos(), -2.0 * t * th.sin()];
            for i in 0..4 {
                r[i] += w2 * cols[i] * fr.samples[n];
                for j in 0..4 {
                    g[i][j] += w2 * cols[i] * cols[j];
                }
            }
        }
        // Gaussian elimination with partial pivoting
        let mut aug: Vec<Vec<f64>> = (0..4).map(|i| {
            let mut row = g[i].to_vec();
            row.push(r[i]);
            row
        }).collect();
        for col in 0..4 {
            let piv = (col..4).max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap()).unwrap();
            aug.swap(col, piv);
            for row in 0..4 {
                if row != col {
                    let fac = aug[row][col] / aug[col][col];
                    for c in col..5 {
                        aug[row][c] -= fac * aug[col][c];
                    }
                }
            }
        }
        let sol: Vec<f64> = (0..4).map(|i| aug[i][4] / aug[i][i]).collect();
        (Complex64::new(sol[0], sol[1]), Complex64::new(sol[2], sol[3]))
    }

    #[test]
    fn mismatched_frequency_matches_oracle() {
        let fr = frame_of(|t| (2.0 * PI * 101.0 * t).cos(), 481);
        let p = qhm_ls_fit(&fr, &[100.0], FS).unwrap();
        let (a, b) = oracle_fit(&fr, 100.0);
        assert!((p.amplitudes[0] - a).norm() < 1e-10);
        assert!((p.slopes[0] - b).norm() < 1e-7 * b.norm().max(1.0));
        let eta = (a.re * b.im - a.im * b.re) / (2.0 * PI * a.norm_sqr());
        assert!((eta - 1.0).abs() < 0.05, "oracle eta {eta}");
    }

    fn random_frame() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-1.0f64..1.0, 121),
            prop::collection::vec(-1.0f64..1.0, 12),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn perturbing_solution_never_helps((x, deltas) in random_frame()) {
            let w = make_window(WindowKind::Hann, 121).unwrap();
            let fr = Frame::centered(0, x, &w, FS).unwrap();
            let f = [900.0, 1800.0, 2700.0];
            let p = qhm_ls_fit(&fr, &f, FS).unwrap();
            let base = model_residual(&fr, &f, &p.amplitudes, &p.slopes);
            prop_assert!((base - p.residual).abs() <= 1e-9 * (1.0 + base));
            let mut a = p.amplitudes.clone();
            let mut b = p.slopes.clone();
            for k in 0..3 {
                a[k] += Complex64::new(deltas[4 * k], deltas[4 * k + 1]) * 1e-3;
                b[k] += Complex64::new(deltas[4 * k + 2], deltas[4 * k + 3]) * 1e-1;
            }
            let perturbed = model_residual(&fr, &f, &a, &b);
            prop_assert!(perturbed >= base - 1e-12 * (1.0 + base));
        }

        #[test]
        fn scaling_frame_scales_parameters(c in 0.01f64..100.0) {
            let x = |t: f64| (2.0 * PI * 203.0 * t + 0.2).cos() + 0.3 * (2.0 * PI * 398.0 * t).cos();
            let fr = frame_of(x, 481);
            let scaled = frame_of(|t| c * x(t), 481);
            let p = qhm_ls_fit(&fr, &[200.0, 400.0], FS).unwrap();
            let q = qhm_ls_fit(&scaled, &[200.0, 400.0], FS).unwrap();
            for k in 0..2 {
                prop_assert!((q.amplitudes[k] - p.amplitudes[k] * c).norm() <= 1e-9 * c);
                prop_assert!((q.slopes[k] - p.slopes[k] * c).norm() <= 1e-6 * c * p.slopes[k].norm().max(1.0));
            }
        }
    }
}
