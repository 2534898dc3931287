//! The low-dimensional membership curve `phi(s) = 1 / (1 + a s^b)` over
//! squared distance `s`, fitted to the min-dist-shifted exponential.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of evenly spaced distances in `[0, 3 * spread]` used for fitting.
pub const FIT_GRID_POINTS: usize = 300;
const FIT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub a: f64,
    pub b: f64,
}

impl CurveParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(invalid("curve", format!("need a > 0 and b > 0, got a = {a}, b = {b}")));
        }
        Ok(Self { a, b })
    }

    /// The Student-t kernel `1 / (1 + s)`.
    pub fn student_t() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

/// Membership `1 / (1 + a * sq_dist^b)`.
#[inline]
pub fn phi(params: CurveParams, sq_dist: f64) -> f64 {
    if sq_dist <= 0.0 {
        return 1.0;
    }
    1.0 / (1.0 + params.a * sq_dist.powf(params.b))
}

/// Target membership over (unsquared) distance: 1 up to `min_dist`, then
/// exponential decay with scale `spread`.
#[inline]
pub fn psi(min_dist: f64, spread: f64, dist: f64) -> f64 {
    if dist <= min_dist {
        1.0
    } else {
        (-(dist - min_dist) / spread).exp()
    }
}

/// The distances the curve is fitted on.
pub fn fit_grid(spread: f64) -> Vec<f64> {
    let hi = 3.0 * spread;
    (0..FIT_GRID_POINTS)
        .map(|k| hi * k as f64 / (FIT_GRID_POINTS - 1) as f64)
        .collect()
}

/// Root-mean-square gap between `phi` and `psi` on the fitting grid.
pub fn fit_rms(params: CurveParams, min_dist: f64, spread: f64) -> f64 {
    let grid = fit_grid(spread);
    let sse: f64 = grid
        .iter()
        .map(|&x| {
            let r = phi(params, x * x) - psi(min_dist, spread, x);
            r * r
        })
        .sum();
    (sse / grid.len() as f64).sqrt()
}

fn residuals_and_jacobian(
    grid: &[f64],
    targets: &[f64],
    a: f64,
    b: f64,
) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let mut sse = 0.0;
    let mut jtr = Vector2::zeros();
    let mut jtj = Matrix2::zeros();
    for (&x, &t) in grid.iter().zip(targets) {
        let (f, da, db) = if x > 0.0 {
            let u = x.powf(2.0 * b);
            let f = 1.0 / (1.0 + a * u);
            let f2 = f * f;
            (f, -u * f2, -a * u * f2 * 2.0 * x.ln())
        } else {
            (1.0, 0.0, 0.0)
        };
        let r = f - t;
        sse += r * r;
        let j = Vector2::new(da, db);
        jtr += j * r;
        jtj += j * j.transpose();
    }
    (sse, jtr, jtj)
}

fn sse_at(grid: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    residuals_and_jacobian(grid, targets, a, b).0
}

/// Least-squares `(a, b)` by damped Gauss-Newton (Levenberg-Marquardt with
/// gain-ratio damping updates) from `(1, 1)`.
pub fn fit_phi(min_dist: f64, spread: f64) -> Result<CurveParams> {
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(invalid("spread", format!("must be positive, got {spread}")));
    }
    if !(min_dist >= 0.0 && min_dist.is_finite()) {
        return Err(invalid("min_dist", format!("must be non-negative, got {min_dist}")));
    }
    let grid = fit_grid(spread);
    let targets: Vec<f64> = grid.iter().map(|&x| psi(min_dist, spread, x)).collect();

    let (mut a, mut b) = (1.0, 1.0);
    let (mut sse, mut jtr, mut jtj) = residuals_and_jacobian(&grid, &targets, a, b);
    let mut lambda = 1e-3 * jtj[(0, 0)].max(jtj[(1, 1)]);
    let mut nu = 2.0;
    for _ in 0..FIT_MAX_ITERS {
        if jtr.norm() < 1e-14 {
            break;
        }
        let damped = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * lambda;
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            lambda *= nu;
            nu *= 2.0;
            continue;
        };
        let (na, nb) = (a + step[0], b + step[1]);
        let predicted = -(step.dot(&jtr) * 2.0 + step.dot(&(jtj * step)));
        let new_sse = if na > 0.0 && nb > 0.0 {
            sse_at(&grid, &targets, na, nb)
        } else {
            f64::INFINITY
        };
        let gain = (sse - new_sse) / predicted.max(f64::MIN_POSITIVE);
        if new_sse.is_finite() && gain > 0.0 {
            let converged = step.norm() <= 1e-12 * (a.abs() + b.abs());
            a = na;
            b = nb;
            (sse, jtr, jtj) = residuals_and_jacobian(&grid, &targets, a, b);
            lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * gain - 1.0).powi(3));
            nu = 2.0;
            if converged {
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
        }
        if !lambda.is_finite() || lambda > 1e300 {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(Error::FitDiverged(format!(
            "min_dist = {min_dist}, spread = {spread}: ended at a = {a}, b = {b}"
        )));
    }
    Ok(CurveParams { a, b })
}
