//! Central finite-difference oracle for gradient verification.
//!
//! Differentiates a black-box scalar function of a flat parameter vector;
//! it never touches the tape, so analytic gradients are checked against a
//! fully independent route. Intended for `f64` and small shapes.

/// d f / d x_i via (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut xs = x.to_vec();
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let fp = f(&xs);
        xs[i] = orig - h;
        let fm = f(&xs);
        xs[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest normalized deviation between two gradient vectors:
/// |a - b| / max(1, |a|, |b|), elementwise.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}
