//! Per-frame envelope fitting against sampled harmonic amplitudes and
//! residual phases.
//!
//! Loss: `sum_k (ln(A_k + eps) - ln(|H_k| + eps))^2 + lambda * wrap(phi_k - angle H_k)^2`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::stability::{ar_roots, poly_from_roots, project_stable, PROJECTED_RADIUS, STABILITY_MARGIN};
use super::{ArmaFrame, ArmaOrders, ArmaSection, SINGULAR_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTarget {
    /// Hz.
    pub frequency: f64,
    /// Linear amplitude.
    pub amplitude: f64,
    /// Residual phase (rad), compared modulo 2 pi.
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Damped Gauss-Newton on the residual vector.
    #[default]
    LevenbergMarquardt,
    /// Steepest descent with Armijo backtracking.
    GradientDescent,
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lm" | "levenberg-marquardt" => Ok(Self::LevenbergMarquardt),
            "gd" | "gradient-descent" => Ok(Self::GradientDescent),
            _ => Err(invalid(format!("unknown fit method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: FitMethod,
    /// Start from an equation-error solution factored into sections instead
    /// of all-zero coefficients. The better of the two starts is kept.
    pub equation_error_init: bool,
    pub max_steps: usize,
    pub phase_weight: f64,
    pub amplitude_floor: f64,
    /// Absolute loss at which iteration stops.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: FitMethod::LevenbergMarquardt,
            equation_error_init: true,
            max_steps: 500,
            phase_weight: 0.1,
            amplitude_floor: 1e-7,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub frame: ArmaFrame,
    pub loss: f64,
    pub initial_loss: f64,
    /// Optimizer iterations, accepted or not.
    pub steps: usize,
    /// Loss after each accepted step, starting with the initial loss.
    pub loss_history: Vec<f64>,
    /// All target amplitudes at or below the floor.
    pub degenerate: bool,
    /// Fewer than `(P + Q + 1) / 2` targets.
    pub underdetermined: bool,
    /// Ten consecutive rejected steps before reaching the tolerance.
    pub stalled: bool,
}

/// Bound on `|ln G|` during iteration; `exp` stays normal and nonzero.
const LOG_GAIN_LIMIT: f64 = 700.0;

/// Precomputed powers `e^{-i w m}` for one target.
struct Point {
    powers: Vec<Complex64>,
    log_amp: f64,
    phase: f64,
    /// `sqrt(lambda)`, or 0 where the target amplitude is at or below the
    /// floor and its phase is undefined.
    phase_scale: f64,
}

struct Problem<'a> {
    points: Vec<Point>,
    orders: ArmaOrders,
    options: &'a FitOptions,
}

struct Eval {
    loss: f64,
    residuals: DVector<f64>,
    jacobian: Option<DMatrix<f64>>,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        self.orders.n_params()
    }

    fn unpack(&self, theta: &[f64]) -> ArmaFrame {
        let (np, nq) = (self.orders.ar_per_section(), self.orders.ma_per_section());
        let mut idx = 1;
        let sections = (0..self.orders.r)
            .map(|_| {
                let ar = theta[idx..idx + np].to_vec();
                let ma = theta[idx + np..idx + np + nq].to_vec();
                idx += np + nq;
                ArmaSection::new(ar, ma)
            })
            .collect();
        ArmaFrame {
            gain: theta[0].exp(),
            sections,
        }
    }

    fn pack(&self, frame: &ArmaFrame) -> Vec<f64> {
        let mut theta = vec![frame.gain.ln()];
        for s in &frame.sections {
            theta.extend_from_slice(&s.ar);
            theta.extend_from_slice(&s.ma);
        }
        theta
    }

    /// Project every section's AR part into the stable region and keep the
    /// gain positive and finite.
    fn project(&self, theta: &mut [f64]) {
        theta[0] = theta[0].clamp(-LOG_GAIN_LIMIT, LOG_GAIN_LIMIT);
        let (np, nq) = (self.orders.ar_per_section(), self.orders.ma_per_section());
        for j in 0..self.orders.r {
            let start = 1 + j * (np + nq);
            let (p, moved) = project_stable(&theta[start..start + np]);
            if moved {
                theta[start..start + np].copy_from_slice(&p);
            }
        }
    }

    fn evaluate(&self, theta: &[f64], with_jacobian: bool) -> Option<Eval> {
        let (np, nq) = (self.orders.ar_per_section(), self.orders.ma_per_section());
        let n = self.points.len();
        let eps = self.options.amplitude_floor;
        let mut residuals = DVector::zeros(2 * n);
        let mut jacobian = with_jacobian.then(|| DMatrix::zeros(2 * n, self.n_params()));
        let log_gain = theta[0];
        for (k, pt) in self.points.iter().enumerate() {
            let mut log_h = Complex64::new(log_gain, 0.0);
            let mut angle = 0.0;
            // d ln H / d theta, filled after the response is known
            let mut dlog: Vec<(usize, Complex64)> = Vec::new();
            for j in 0..self.orders.r {
                let start = 1 + j * (np + nq);
                let ar = &theta[start..start + np];
                let ma = &theta[start + np..start + np + nq];
                let mut a = Complex64::new(1.0, 0.0);
                for (p, c) in ar.iter().enumerate() {
                    a += c * pt.powers[p];
                }
                let mut b = Complex64::new(1.0, 0.0);
                for (q, c) in ma.iter().enumerate() {
                    b += c * pt.powers[q];
                }
                if a.norm() < SINGULAR_LIMIT || b.norm() < SINGULAR_LIMIT {
                    return None;
                }
                let h = b / a;
                log_h += h.ln();
                angle += h.arg();
                if with_jacobian {
                    for p in 0..np {
                        dlog.push((start + p, -pt.powers[p] / a));
                    }
                    for q in 0..nq {
                        dlog.push((start + np + q, pt.powers[q] / b));
                    }
                }
            }
            let mag = log_h.re.exp();
            residuals[2 * k] = pt.log_amp - (mag + eps).ln();
            residuals[2 * k + 1] = pt.phase_scale * wrap_phase(pt.phase - angle);
            if let Some(jac) = jacobian.as_mut() {
                let scale = mag / (mag + eps);
                jac[(2 * k, 0)] = -scale;
                for (col, d) in dlog {
                    jac[(2 * k, col)] = -scale * d.re;
                    jac[(2 * k + 1, col)] = -pt.phase_scale * d.im;
                }
            }
        }
        let loss = residuals.norm_squared();
        loss.is_finite().then_some(Eval {
            loss,
            residuals,
            jacobian,
        })
    }
}

pub fn fit_frame(
    targets: &[FitTarget],
    orders: ArmaOrders,
    options: &FitOptions,
    sample_rate: f64,
) -> Result<FitOutcome> {
    ArmaOrders::new(orders.p, orders.q, orders.r)?;
    if !(options.phase_weight >= 0.0 && options.amplitude_floor > 0.0) {
        return Err(invalid("phase weight must be >= 0 and amplitude floor > 0"));
    }
    let nyquist = sample_rate / 2.0;
    for t in targets {
        if !(t.frequency.abs() < nyquist) || !(t.amplitude >= 0.0) || !t.phase.is_finite() {
            return Err(invalid(format!("invalid fit target {t:?}")));
        }
    }
    let max_order = orders.ar_per_section().max(orders.ma_per_section());
    let eps = options.amplitude_floor;
    let problem = Problem {
        points: targets
            .iter()
            .map(|t| {
                let step = Complex64::from_polar(1.0, -2.0 * PI * t.frequency / sample_rate);
                let mut powers = Vec::with_capacity(max_order);
                let mut z = step;
                for _ in 0..max_order {
                    powers.push(z);
                    z *= step;
                }
                Point {
                    powers,
                    log_amp: (t.amplitude + eps).ln(),
                    phase: t.phase,
                    phase_scale: if t.amplitude > eps { options.phase_weight.sqrt() } else { 0.0 },
                }
            })
            .collect(),
        orders,
        options,
    };
    let underdetermined = 2 * targets.len() < orders.n_params();
    let mean_amp = if targets.is_empty() {
        0.0
    } else {
        targets.iter().map(|t| t.amplitude).sum::<f64>() / targets.len() as f64
    };
    if mean_amp <= eps {
        let frame = ArmaFrame::identity(eps, orders);
        let loss = problem
            .evaluate(&problem.pack(&frame), false)
            .map_or(f64::INFINITY, |e| e.loss);
        return Ok(FitOutcome {
            frame,
            loss,
            initial_loss: loss,
            steps: 0,
            loss_history: vec![loss],
            degenerate: true,
            underdetermined,
            stalled: false,
        });
    }

    let zero_start = problem.pack(&ArmaFrame::identity(mean_amp, orders));
    let mut theta = zero_start.clone();
    let mut current = problem
        .evaluate(&theta, true)
        .ok_or(Error::NonFinite("initial fit loss"))?;
    if options.equation_error_init && orders.p + orders.q > 0 {
        if let Some(frame) = equation_error_start(targets, orders, sample_rate, eps) {
            let mut candidate = problem.pack(&frame);
            problem.project(&mut candidate);
            if let Some(e) = problem.evaluate(&candidate, true) {
                if e.loss < current.loss {
                    theta = candidate;
                    current = e;
                }
            }
        }
    }

    let initial_loss = current.loss;
    let mut history = vec![initial_loss];
    let mut steps = 0;
    let mut rejected_streak = 0;
    let mut stalled = false;
    match options.method {
        FitMethod::LevenbergMarquardt => {
            let mut mu = {
                let jac = current.jacobian.as_ref().unwrap();
                let max_diag = (0..jac.ncols()).map(|c| jac.column(c).norm_squared()).fold(0.0, f64::max);
                1e-3 * max_diag.max(1e-12)
            };
            while steps < options.max_steps && current.loss > options.tolerance {
                steps += 1;
                let jac = current.jacobian.as_ref().unwrap();
                let jtj = jac.transpose() * jac;
                let grad = jac.transpose() * &current.residuals;
                let max_diag = jtj.diagonal().max().max(1e-300);
                let mut system = jtj.clone();
                for i in 0..system.nrows() {
                    system[(i, i)] += mu * (jtj[(i, i)] + 1e-9 * max_diag);
                }
                let Some(chol) = Cholesky::new(system) else {
                    mu *= 4.0;
                    continue;
                };
                let delta = chol.solve(&(-grad));
                let mut candidate: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
                problem.project(&mut candidate);
                match problem.evaluate(&candidate, true) {
                    Some(e) if e.loss < current.loss => {
                        let improvement = (current.loss - e.loss) / current.loss;
                        theta = candidate;
                        current = e;
                        history.push(current.loss);
                        mu = (mu / 3.0).max(1e-15);
                        rejected_streak = 0;
                        if improvement < 1e-10 {
                            break;
                        }
                    }
                    _ => {
                        mu *= 4.0;
                        rejected_streak += 1;
                        if rejected_streak >= 10 {
                            stalled = true;
                        }
                        if mu > 1e16 {
                            break;
                        }
                    }
                }
            }
        }
        FitMethod::GradientDescent => {
            let mut alpha = 1.0;
            while steps < options.max_steps && current.loss > options.tolerance {
                steps += 1;
                let jac = current.jacobian.as_ref().unwrap();
                let grad = jac.transpose() * &current.residuals;
                // loss = |r|^2 so its gradient is 2 J^T r
                let g2 = 4.0 * grad.norm_squared();
                if g2 < 1e-30 {
                    break;
                }
                let mut accepted = false;
                alpha *= 2.0;
                for _ in 0..60 {
                    let mut candidate: Vec<f64> =
                        theta.iter().zip(grad.iter()).map(|(a, g)| a - alpha * 2.0 * g).collect();
                    problem.project(&mut candidate);
                    if let Some(e) = problem.evaluate(&candidate, true) {
                        if e.loss <= current.loss - 1e-4 * alpha * g2 {
                            theta = candidate;
                            current = e;
                            history.push(current.loss);
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    stalled = current.loss > options.tolerance;
                    break;
                }
            }
        }
    }

    Ok(FitOutcome {
        frame: problem.unpack(&theta),
        loss: current.loss,
        initial_loss,
        steps,
        loss_history: history,
        degenerate: false,
        underdetermined,
        stalled,
    })
}

/// Linear equation-error fit `A(w) T(w) ~ B(w)` of a single ARMA of orders
/// (P, Q), factored into sections through its roots.
fn equation_error_start(targets: &[FitTarget], orders: ArmaOrders, sample_rate: f64, eps: f64) -> Option<ArmaFrame> {
    // rows without a defined phase carry no information here
    let targets: Vec<&FitTarget> = targets.iter().filter(|t| t.amplitude > eps).collect();
    let (p, q) = (orders.p, orders.q);
    let n = p + q + 1;
    let mut x = DMatrix::<f64>::zeros(2 * targets.len(), n);
    let mut y = DVector::<f64>::zeros(2 * targets.len());
    for (k, t) in targets.iter().enumerate() {
        let target = Complex64::from_polar(t.amplitude.max(eps), t.phase);
        let weight = 1.0 / (t.amplitude + eps);
        let w = 2.0 * PI * t.frequency / sample_rate;
        for i in 0..p {
            let v = target * Complex64::from_polar(1.0, -w * (i + 1) as f64) * weight;
            x[(2 * k, i)] = v.re;
            x[(2 * k + 1, i)] = v.im;
        }
        for i in 0..=q {
            let v = -Complex64::from_polar(1.0, -w * i as f64) * weight;
            x[(2 * k, p + i)] = v.re;
            x[(2 * k + 1, p + i)] = v.im;
        }
        y[2 * k] = -target.re * weight;
        y[2 * k + 1] = -target.im * weight;
    }
    let mut gram = x.transpose() * &x;
    let ridge = 1e-10 * gram.trace() / n as f64;
    for i in 0..n {
        gram[(i, i)] += ridge;
    }
    let sol = Cholesky::new(gram)?.solve(&(x.transpose() * y));
    let g0 = sol[p];
    if !(g0.abs() > 1e-12) || sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let ar_roots_all: Vec<Complex64> = ar_roots(&sol.as_slice()[..p])
        .into_iter()
        .map(|z| {
            if z.norm() > 1.0 - STABILITY_MARGIN {
                z * (PROJECTED_RADIUS / z.norm())
            } else {
                z
            }
        })
        .collect();
    let ma: Vec<f64> = sol.as_slice()[p + 1..].iter().map(|v| v / g0).collect();
    let ma_roots_all = ar_roots(&ma);
    let ar_split = split_roots(&ar_roots_all, orders.r)?;
    let ma_split = split_roots(&ma_roots_all, orders.r)?;
    let sections = ar_split
        .iter()
        .zip(&ma_split)
        .map(|(a, b)| ArmaSection::new(poly_from_roots(a), poly_from_roots(b)))
        .collect();
    Some(ArmaFrame {
        gain: g0.abs(),
        sections,
    })
}

/// Distribute roots over `r` sections of equal order, keeping conjugate pairs
/// together so every section stays real.
fn split_roots(roots: &[Complex64], r: usize) -> Option<Vec<Vec<Complex64>>> {
    let n = roots.len();
    if n % r != 0 {
        return None;
    }
    let cap = n / r;
    let scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut pairs: Vec<Complex64> = roots.iter().copied().filter(|z| z.im > tol).collect();
    let mut reals: Vec<f64> = roots.iter().filter(|z| z.im.abs() <= tol).map(|z| z.re).collect();
    if 2 * pairs.len() + reals.len() != n {
        return None;
    }
    pairs.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    reals.sort_by(f64::total_cmp);
    let mut sections: Vec<Vec<Complex64>> = vec![Vec::with_capacity(cap); r];
    let mut next = 0;
    for z in pairs {
        let slot = (0..r).map(|i| (next + i) % r).find(|&j| cap - sections[j].len() >= 2);
        match slot {
            Some(j) => {
                sections[j].push(z);
                sections[j].push(z.conj());
                next = (j + 1) % r;
            }
            None => {
                // no room for a pair: replace it by two real roots of the
                // same modulus
                reals.push(z.norm());
                reals.push(-z.norm());
            }
        }
    }
    for v in reals {
        let j = (0..r).find(|&j| sections[j].len() < cap)?;
        sections[j].push(Complex64::new(v, 0.0));
    }
    Some(sections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma::{sample_harmonics, stability::tests::random_poly};
    use rand::{Rng, SeedableRng};

    fn targets_from(frame: &ArmaFrame, freqs: &[f64], fs: f64) -> Vec<FitTarget> {
        let s = sample_harmonics(frame, freqs, fs).unwrap();
        freqs
            .iter()
            .zip(s.magnitudes.iter().zip(&s.delays))
            .map(|(&f, (&a, &d))| FitTarget {
                frequency: f,
                amplitude: a,
                phase: wrap_phase(d),
            })
            .collect()
    }

    #[test]
    fn flat_targets_give_identity() {
        let targets: Vec<FitTarget> = (1..=20)
            .map(|k| FitTarget {
                frequency: 200.0 * k as f64,
                amplitude: 0.3,
                phase: 0.0,
            })
            .collect();
        let orders = ArmaOrders::new(4, 4, 2).unwrap();
        let out = fit_frame(&targets, orders, &FitOptions::default(), 24000.0).unwrap();
        assert!(out.loss <= 1e-6);
        assert!((out.frame.gain - 0.3).abs() < 1e-6);
        for s in &out.frame.sections {
            assert!(s.ar.iter().chain(&s.ma).all(|c| c.abs() < 1e-3), "{s:?}");
        }
    }

    #[test]
    fn zero_targets_are_degenerate() {
        let targets: Vec<FitTarget> = (1..=5)
            .map(|k| FitTarget {
                frequency: 100.0 * k as f64,
                amplitude: 0.0,
                phase: 0.0,
            })
            .collect();
        let out = fit_frame(&targets, ArmaOrders::new(2, 2, 1).unwrap(), &FitOptions::default(), 8000.0).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.frame.gain, 1e-7);
    }

    #[test]
    fn recovers_known_cascade_response() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let orders = ArmaOrders::new(4, 4, 2).unwrap();
        let fs = 16000.0;
        let freqs: Vec<f64> = (1..=20).map(|k| 350.0 * k as f64).collect();
        let truth = ArmaFrame {
            gain: 0.5,
            sections: (0..2)
                .map(|_| ArmaSection::new(random_poly(&mut rng, 2, 0.9), random_poly(&mut rng, 2, 0.9)))
                .collect(),
        };
        let targets = targets_from(&truth, &freqs, fs);
        for method in [FitMethod::LevenbergMarquardt] {
            let opts = FitOptions { method, ..Default::default() };
            let out = fit_frame(&targets, orders, &opts, fs).unwrap();
            let got = sample_harmonics(&out.frame, &freqs, fs).unwrap();
            for (g, t) in got.magnitudes.iter().zip(&targets) {
                let db = 20.0 * (g / t.amplitude).log10();
                assert!(db.abs() <= 0.5, "{db}");
            }
        }
    }

    #[test]
    fn loss_history_monotone_for_both_methods() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let targets: Vec<FitTarget> = (1..=25)
            .map(|k| FitTarget {
                frequency: 180.0 * k as f64,
                amplitude: rng.random_range(0.01..1.0),
                phase: rng.random_range(-PI..PI),
            })
            .collect();
        for method in [FitMethod::LevenbergMarquardt, FitMethod::GradientDescent] {
            let opts = FitOptions {
                method,
                equation_error_init: false,
                max_steps: 60,
                ..Default::default()
            };
            let out = fit_frame(&targets, ArmaOrders::new(6, 6, 3).unwrap(), &opts, 24000.0).unwrap();
            for w in out.loss_history.windows(2) {
                assert!(w[1] <= w[0]);
            }
            for s in &out.frame.sections {
                let max = ar_roots(&s.ar).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(max <= 1.0 - STABILITY_MARGIN);
            }
        }
    }

    #[test]
    fn gain_homogeneity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let freqs: Vec<f64> = (1..=24).map(|k| 210.0 * k as f64).collect();
        let truth = ArmaFrame {
            gain: 1.0,
            sections: vec![ArmaSection::new(random_poly(&mut rng, 2, 0.85), random_poly(&mut rng, 2, 0.8))],
        };
        let targets = targets_from(&truth, &freqs, 24000.0);
        let scaled: Vec<FitTarget> = targets.iter().map(|t| FitTarget { amplitude: 3.0 * t.amplitude, ..*t }).collect();
        let orders = ArmaOrders::new(2, 2, 1).unwrap();
        let a = fit_frame(&targets, orders, &FitOptions::default(), 24000.0).unwrap();
        let b = fit_frame(&scaled, orders, &FitOptions::default(), 24000.0).unwrap();
        let ma = sample_harmonics(&a.frame, &freqs, 24000.0).unwrap().magnitudes;
        let mb = sample_harmonics(&b.frame, &freqs, 24000.0).unwrap().magnitudes;
        for (x, y) in ma.iter().zip(&mb) {
            assert!((y / x / 3.0 - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn split_keeps_pairs_real() {
        let roots = vec![
            Complex64::from_polar(0.9, 0.3),
            Complex64::from_polar(0.9, -0.3),
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.2, 0.0),
        ];
        let s = split_roots(&roots, 2).unwrap();
        assert!(s.iter().all(|sec| sec.len() == 2));
        for sec in &s {
            let c = poly_from_roots(sec);
            assert!(c.iter().all(|v| v.is_finite()));
        }
        assert!(split_roots(&roots, 3).is_none());
    }

    #[test]
    fn rejects_bad_targets() {
        let bad = [FitTarget {
            frequency: 9000.0,
            amplitude: 1.0,
            phase: 0.0,
        }];
        assert!(fit_frame(&bad, ArmaOrders::new(2, 2, 1).unwrap(), &FitOptions::default(), 16000.0).is_err());
    }
}
