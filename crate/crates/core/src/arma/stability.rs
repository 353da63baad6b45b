//! Root-domain checks and projection for AR polynomials
//! `1 + a_1 z^-1 + ... + a_n z^-n`.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Largest root modulus tolerated after projection is `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-4;
/// Modulus offending roots are pulled back to.
pub const PROJECTED_RADIUS: f64 = 0.995;

/// True when every root has modulus below `1 - margin` (step-down recursion
/// on the radially rescaled polynomial).
pub fn is_stable_with_margin(ar: &[f64], margin: f64) -> bool {
    let rho = 1.0 - margin;
    let mut a: Vec<f64> = ar
        .iter()
        .enumerate()
        .map(|(p, c)| c / rho.powi(p as i32 + 1))
        .collect();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return false;
        }
        let n = a.len();
        let d = 1.0 - k * k;
        a = (0..n - 1).map(|i| (a[i] - k * a[n - 2 - i]) / d).collect();
    }
    true
}

/// Roots of `z^n + c_1 z^{n-1} + ... + c_n` from the companion matrix.
pub fn ar_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (j, c) in coeffs.iter().enumerate() {
        m[(0, j)] = -c;
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

/// Monic real polynomial with the given roots (conjugate pairs expected);
/// returns `[c_1, ..., c_n]`.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for z in roots {
        let mut next = c.clone();
        next.push(Complex64::new(0.0, 0.0));
        for i in 1..next.len() {
            next[i] -= z * c[i - 1];
        }
        c = next;
    }
    c[1..].iter().map(|v| v.re).collect()
}

/// Pull roots at or beyond `1 - STABILITY_MARGIN` radially to
/// `PROJECTED_RADIUS`. Returns the coefficients and whether anything moved.
pub fn project_stable(ar: &[f64]) -> (Vec<f64>, bool) {
    if is_stable_with_margin(ar, STABILITY_MARGIN) {
        return (ar.to_vec(), false);
    }
    let roots: Vec<Complex64> = ar_roots(ar)
        .into_iter()
        .map(|z| {
            if z.norm() > 1.0 - STABILITY_MARGIN {
                z * (PROJECTED_RADIUS / z.norm())
            } else {
                z
            }
        })
        .collect();
    let mut out = poly_from_roots(&roots);
    // rounding in the root round trip can leave a root marginally outside
    let mut gamma: f64 = 1.0;
    while !is_stable_with_margin(&out, STABILITY_MARGIN) {
        gamma *= 0.999;
        out = out
            .iter()
            .enumerate()
            .map(|(p, c)| c * gamma.powi(p as i32 + 1))
            .collect();
    }
    (out, true)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    /// Real polynomial of order `n` with random roots of modulus below
    /// `max_radius`.
    pub(crate) fn random_poly(rng: &mut impl Rng, n: usize, max_radius: f64) -> Vec<f64> {
        let mut roots = Vec::with_capacity(n);
        while roots.len() + 1 < n {
            let z = Complex64::from_polar(rng.random_range(0.05..max_radius), rng.random_range(0.0..std::f64::consts::PI));
            roots.push(z);
            roots.push(z.conj());
        }
        if roots.len() < n {
            roots.push(Complex64::new(rng.random_range(-max_radius..max_radius), 0.0));
        }
        poly_from_roots(&roots)
    }

    #[test]
    fn step_down_matches_roots() {
        assert!(is_stable_with_margin(&[], 0.0));
        assert!(is_stable_with_margin(&[-0.9], 0.0));
        assert!(!is_stable_with_margin(&[-1.0], 0.0));
        assert!(!is_stable_with_margin(&[-0.99995], STABILITY_MARGIN));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let c = random_poly(&mut rng, n, 1.3);
            let max = ar_roots(&c).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if (max - 1.0).abs() > 1e-6 {
                assert_eq!(is_stable_with_margin(&c, 0.0), max < 1.0, "{c:?}");
            }
        }
    }

    #[test]
    fn roots_round_trip() {
        let c = vec![-1.2, 0.5, 0.1];
        let back = poly_from_roots(&ar_roots(&c));
        for (a, b) in c.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_lands_inside() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..17);
            let c = random_poly(&mut rng, n, 1.5);
            let (p, _) = project_stable(&c);
            let max = ar_roots(&p).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(max <= 1.0 - STABILITY_MARGIN, "{max}");
        }
        let (same, moved) = project_stable(&[-0.5, 0.06]);
        assert!(!moved);
        assert_eq!(same, vec![-0.5, 0.06]);
        let (p, moved) = project_stable(&[-2.0]);
        assert!(moved);
        assert_abs_diff_eq!(p[0], -PROJECTED_RADIUS, epsilon = 1e-12);
    }
}
