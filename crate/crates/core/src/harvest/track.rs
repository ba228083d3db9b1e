use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::roots::eval_monic;

/// Numerical policy for predictor-corrector tracking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSettings {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Consecutive accepted steps before the step grows.
    pub grow_after: u32,
    pub corrector_tolerance: f64,
    pub corrector_iterations: u32,
    pub divergence_bound: f64,
    pub matching_tolerance: f64,
    pub refinement_tolerance: f64,
    /// Hard cap on predictor steps per path.
    pub max_steps: u32,
}

impl Default for TrackSettings {
    fn default() -> Self {
        TrackSettings {
            initial_step: 0.05,
            min_step: 1e-7,
            max_step: 0.1,
            shrink: 0.5,
            grow: 1.25,
            grow_after: 3,
            corrector_tolerance: 1e-10,
            corrector_iterations: 3,
            divergence_bound: 1e8,
            matching_tolerance: 1e-6,
            refinement_tolerance: 1e-12,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SettingsError {
    #[error("minimum step {min} must be positive and below the initial step {initial}")]
    Steps { min: f64, initial: f64 },
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("shrink factor must lie in (0, 1) and growth factor must be at least 1")]
    Factors,
}

impl TrackSettings {
    pub fn validate(&self) -> Result<(), SettingsError> {
        let positive = [
            ("corrector tolerance", self.corrector_tolerance),
            ("matching tolerance", self.matching_tolerance),
            ("refinement tolerance", self.refinement_tolerance),
            ("divergence bound", self.divergence_bound),
            ("maximum step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SettingsError::NonPositive(name));
            }
        }
        if !(self.min_step > 0.0 && self.min_step < self.initial_step) {
            return Err(SettingsError::Steps { min: self.min_step, initial: self.initial_step });
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.grow >= 1.0) {
            return Err(SettingsError::Factors);
        }
        if self.corrector_iterations == 0 {
            return Err(SettingsError::NonPositive("corrector iteration cap"));
        }
        if self.max_steps == 0 {
            return Err(SettingsError::NonPositive("step cap"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackFailure {
    StepUnderflow,
    Diverged,
    CorrectorStalled,
    Singular,
    StepLimit,
    /// The start point is not a solution of the starting system.
    BadStart,
}

impl TrackFailure {
    pub fn label(self) -> &'static str {
        match self {
            TrackFailure::StepUnderflow => "step_underflow",
            TrackFailure::Diverged => "diverged",
            TrackFailure::CorrectorStalled => "corrector_stalled",
            TrackFailure::Singular => "singular",
            TrackFailure::StepLimit => "step_limit",
            TrackFailure::BadStart => "bad_start",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackReport {
    pub outcome: Result<Complex64, TrackFailure>,
    pub steps: u32,
    pub newton_iterations: u32,
    pub micros: u64,
}

impl TrackReport {
    /// Deterministic cost: accepted and rejected predictor steps plus
    /// corrector iterations, at least 1.
    pub fn work_units(&self) -> u64 {
        (u64::from(self.steps) + u64::from(self.newton_iterations)).max(1)
    }
}

/// `H(x, t) = (1 - t) g1 F1(x) + t g2 F2(x)` for monic `F1`, `F2` of equal degree.
struct Segment<'a> {
    f1: &'a [Complex64],
    f2: &'a [Complex64],
    g1: Complex64,
    g2: Complex64,
}

impl Segment<'_> {
    /// Returns `(H, dH/dx, dH/dt)`.
    fn eval(&self, x: Complex64, t: f64) -> (Complex64, Complex64, Complex64) {
        let (p1, d1) = eval_monic(self.f1, x);
        let (p2, d2) = eval_monic(self.f2, x);
        let a = self.g1 * (1.0 - t);
        let b = self.g2 * t;
        (a * p1 + b * p2, a * d1 + b * d2, self.g2 * p2 - self.g1 * p1)
    }

    /// Magnitude used to judge singularity of `dH/dx`.
    fn scale(&self, x: Complex64) -> f64 {
        let r = x.norm().max(1.0);
        let d = self.f1.len() as f64;
        d * r.powi(self.f1.len() as i32 - 1)
    }
}

enum Newton {
    Converged(Complex64, u32),
    Stalled(u32),
    Singular,
}

fn newton(seg: &Segment, mut x: Complex64, t: f64, tol: f64, cap: u32, bound: f64) -> Newton {
    let mut previous = f64::INFINITY;
    for it in 1..=cap {
        let (h, hx, _) = seg.eval(x, t);
        if hx.norm() <= 1e-14 * seg.scale(x) {
            return Newton::Singular;
        }
        let dx = h / hx;
        x -= dx;
        let size = dx.norm();
        if !x.re.is_finite() || !x.im.is_finite() || x.norm() > bound {
            return Newton::Stalled(it);
        }
        if size <= tol * (1.0 + x.norm()) {
            return Newton::Converged(x, it);
        }
        // Newton must contract quickly from a good prediction; a slow
        // sequence usually means the prediction landed near another path.
        if it > 1 && size > 0.5 * previous {
            return Newton::Stalled(it);
        }
        previous = size;
    }
    Newton::Stalled(cap)
}

/// Tracks `start`, a root of `f1`, along the segment homotopy to a root of `f2`.
pub fn track_path(
    f1: &[Complex64],
    f2: &[Complex64],
    gamma1: Complex64,
    gamma2: Complex64,
    start: Complex64,
    settings: &TrackSettings,
) -> TrackReport {
    let clock = Instant::now();
    let mut steps = 0u32;
    let mut iterations = 0u32;
    let outcome = run(f1, f2, gamma1, gamma2, start, settings, &mut steps, &mut iterations);
    TrackReport {
        outcome,
        steps,
        newton_iterations: iterations,
        micros: (clock.elapsed().as_micros() as u64).max(1),
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    f1: &[Complex64],
    f2: &[Complex64],
    gamma1: Complex64,
    gamma2: Complex64,
    start: Complex64,
    s: &TrackSettings,
    steps: &mut u32,
    iterations: &mut u32,
) -> Result<Complex64, TrackFailure> {
    assert_eq!(f1.len(), f2.len(), "systems must share a degree");
    let seg = Segment { f1, f2, g1: gamma1, g2: gamma2 };
    let d = f1.len();
    let residual = eval_monic(f1, start).0.norm() / super::roots::residual_scale(d, start);
    if residual.is_nan() || residual > s.corrector_tolerance.max(1e-8) {
        return Err(TrackFailure::BadStart);
    }

    let mut x = start;
    let mut t = 0.0f64;
    let mut h = s.initial_step.min(s.max_step);
    let mut streak = 0u32;
    let mut stalls_in_row = 0u32;
    while t < 1.0 {
        if *steps >= s.max_steps {
            return Err(TrackFailure::StepLimit);
        }
        *steps += 1;
        let step = h.min(1.0 - t);
        let (_, hx, ht) = seg.eval(x, t);
        if hx.norm() <= 1e-14 * seg.scale(x) {
            return Err(TrackFailure::Singular);
        }
        let predicted = x - ht / hx * step;
        let t_next = if step == 1.0 - t { 1.0 } else { t + step };
        match newton(&seg, predicted, t_next, s.corrector_tolerance, s.corrector_iterations, s.divergence_bound) {
            Newton::Converged(next, its) => {
                *iterations += its;
                if next.norm() > s.divergence_bound {
                    return Err(TrackFailure::Diverged);
                }
                x = next;
                t = t_next;
                stalls_in_row = 0;
                streak += 1;
                if streak >= s.grow_after {
                    h = (h * s.grow).min(s.max_step);
                    streak = 0;
                }
            }
            Newton::Stalled(its) => {
                *iterations += its;
                streak = 0;
                stalls_in_row += 1;
                h *= s.shrink;
                if h < s.min_step {
                    return Err(if stalls_in_row > 1 {
                        TrackFailure::StepUnderflow
                    } else {
                        TrackFailure::CorrectorStalled
                    });
                }
            }
            Newton::Singular => return Err(TrackFailure::Singular),
        }
        if x.norm() > s.divergence_bound {
            return Err(TrackFailure::Diverged);
        }
    }

    for _ in 0..8 {
        let (p, dp) = eval_monic(f2, x);
        if dp.norm() <= 1e-14 * seg.scale(x) {
            return Err(TrackFailure::Singular);
        }
        let dx = p / dp;
        x -= dx;
        *iterations += 1;
        if dx.norm() <= s.refinement_tolerance * (1.0 + x.norm()) {
            break;
        }
    }
    if eval_monic(f2, x).0.norm() > 1e-10 * super::roots::residual_scale(d, x) {
        return Err(TrackFailure::CorrectorStalled);
    }
    Ok(x)
}
