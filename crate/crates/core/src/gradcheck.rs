//! Central finite differences for checking analytic gradients.

use ndarray::Array2;

/// Default step, matching the tolerance budget of the gradient checks.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Numerical gradient of `energy` at `x` by central differences.
pub fn central_difference<F>(energy: F, x: &Array2<f64>, h: f64) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut grad = Array2::zeros(x.dim());
    for (idx, g) in grad.indexed_iter_mut() {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let plus = energy(&probe);
        probe[idx] = orig - h;
        let minus = energy(&probe);
        probe[idx] = orig;
        *g = (plus - minus) / (2.0 * h);
    }
    grad
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both norms are
/// below `1e-8`.
pub fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let norm = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = norm(&(analytic - numeric));
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}
