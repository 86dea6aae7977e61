use super::tensor::Scalar;

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares the analytic gradient returned by `f` against central
/// differences with step `epsilon`, returning the maximum relative error over
/// coordinates.
///
/// `f` maps a point to `(value, gradient)`.
pub fn grad_check<F, Func>(f: Func, point: &[F], epsilon: F) -> f64
where
    F: Scalar,
    Func: Fn(&[F]) -> (F, Vec<F>),
{
    let (_, analytic) = f(point);
    assert_eq!(analytic.len(), point.len(), "gradient length");
    let mut x = point.to_vec();
    let two_eps = epsilon + epsilon;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let (plus, _) = f(&x);
        x[i] = orig - epsilon;
        let (minus, _) = f(&x);
        x[i] = orig;
        let numeric = ((plus - minus) / two_eps).to_f64().unwrap_or(f64::NAN);
        let a = analytic[i].to_f64().unwrap_or(f64::NAN);
        let err = relative_error(a, numeric);
        if err.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}
