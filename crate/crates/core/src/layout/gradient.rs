//! Per-sample gradients of the layout objective with respect to `y_i`.

use super::curve::CurveParams;

#[inline]
fn sq_norm_diff(yi: &[f64], yj: &[f64]) -> f64 {
    yi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Scalar `c` with `grad log(phi) = c * (y_i - y_j)`; zero for coincident points.
#[inline]
pub fn attractive_coefficient(params: CurveParams, sq_dist: f64) -> f64 {
    if sq_dist <= 0.0 {
        return 0.0;
    }
    let sb = sq_dist.powf(params.b);
    -2.0 * params.a * params.b * sb / sq_dist / (1.0 + params.a * sb)
}

/// Scalar `c` with `grad log(1 - phi) = c * (y_i - y_c)`, with `eps` added
/// to the squared distance in the singular factor.
#[inline]
pub fn repulsive_coefficient(params: CurveParams, sq_dist: f64, eps: f64) -> f64 {
    let sb = if sq_dist > 0.0 { sq_dist.powf(params.b) } else { 0.0 };
    2.0 * params.b / ((eps + sq_dist) * (1.0 + params.a * sb))
}

/// Gradient of `log phi(|y_i - y_j|^2)` in `y_i`, each component clipped to `+-clip`.
pub fn attractive_gradient(params: CurveParams, yi: &[f64], yj: &[f64], clip: f64) -> Vec<f64> {
    let c = attractive_coefficient(params, sq_norm_diff(yi, yj));
    yi.iter()
        .zip(yj)
        .map(|(a, b)| (c * (a - b)).clamp(-clip, clip))
        .collect()
}

/// Gradient of `log(1 - phi(|y_i - y_c|^2))` in `y_i`, regularized by `eps`
/// and clipped to `+-clip` per component.
pub fn repulsive_gradient(params: CurveParams, yi: &[f64], yc: &[f64], eps: f64, clip: f64) -> Vec<f64> {
    let c = repulsive_coefficient(params, sq_norm_diff(yi, yc), eps);
    yi.iter()
        .zip(yc)
        .map(|(a, b)| (c * (a - b)).clamp(-clip, clip))
        .collect()
}
