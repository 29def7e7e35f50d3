//! Central finite differences for verifying analytic gradients.

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + h;
            let plus = f(&work);
            work[i] = x[i] - h;
            let minus = f(&work);
            work[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest amount by which any entry misses the tolerance band.
///
/// An entry passes when `|a - n| <= abs_tol` or
/// `|a - n| <= rel_tol * max(|a|, |n|)`. Returns a value `<= 0` when every
/// entry passes.
pub fn max_violation(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let err = (a - n).abs();
            err - abs_tol.max(rel_tol * a.abs().max(n.abs()))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
