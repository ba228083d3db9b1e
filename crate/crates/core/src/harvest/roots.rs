use num_complex::Complex64;
use thiserror::Error;

/// Evaluates the monic polynomial `x^d + c[d-1] x^(d-1) + ... + c[0]` and
/// its derivative.
pub fn eval_monic(coeffs: &[Complex64], x: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// Scale used for relative residuals: `1 + |x|^d`.
pub fn residual_scale(degree: usize, x: Complex64) -> f64 {
    1.0 + x.norm().powi(degree as i32)
}

#[derive(Debug, Error, PartialEq)]
pub enum RootError {
    #[error("polynomial must have degree at least 1")]
    Degree,
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("root iteration did not converge within {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

const MAX_SWEEPS: usize = 500;
const RESIDUAL_TARGET: f64 = 1e-12;

/// All roots of a monic polynomial by Aberth–Ehrlich simultaneous iteration,
/// sorted by real then imaginary part.
pub fn reference_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>, RootError> {
    let d = coeffs.len();
    if d == 0 {
        return Err(RootError::Degree);
    }
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(RootError::NonFinite);
    }
    if d == 1 {
        return Ok(vec![-coeffs[0]]);
    }
    // Fujiwara-style bound on the root moduli.
    let radius = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c.norm().powf(1.0 / (d - i) as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut z: Vec<Complex64> = (0..d)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / d as f64 + 0.4))
        .collect();

    let worst = |z: &[Complex64]| {
        z.iter()
            .map(|&r| eval_monic(coeffs, r).0.norm() / residual_scale(d, r))
            .fold(0.0, f64::max)
    };
    for _ in 0..MAX_SWEEPS {
        let mut moved = 0.0f64;
        for k in 0..d {
            let (p, dp) = eval_monic(coeffs, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..d).filter(|&j| j != k).map(|j| 1.0 / (z[k] - z[j])).sum();
            let step = ratio / (1.0 - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[k] -= step;
                moved = moved.max(step.norm() / (1.0 + z[k].norm()));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval_monic(coeffs, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *r - p / dp;
            if eval_monic(coeffs, next).0.norm() < p.norm() {
                *r = next;
            } else {
                break;
            }
        }
    }
    let residual = worst(&z);
    if residual >= RESIDUAL_TARGET || !residual.is_finite() {
        return Err(RootError::NoConvergence { iterations: MAX_SWEEPS, residual });
    }
    z.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(z)
}

/// Monic coefficients `c[0..d]` of `prod (x - r)`.
pub fn from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        poly = next;
    }
    poly.pop();
    poly
}
