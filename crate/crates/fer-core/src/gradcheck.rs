//! Central finite-difference gradient checking.
//!
//! Only ever evaluates loss *values*, so it stays independent of the
//! analytic gradient paths it is used to verify.

/// Numerical gradient of `f` at `at` via central differences.
pub fn central_diff<F>(mut f: F, at: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut point = at.to_vec();
    let mut grad = vec![0.0; at.len()];
    for i in 0..at.len() {
        let orig = point[i];
        point[i] = orig + step;
        let plus = f(&point);
        point[i] = orig - step;
        let minus = f(&point);
        point[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Default denominator floor for [`max_rel_error`].
///
/// Central differences resolve a derivative no finer than `|f| * eps / h`
/// (cancellation of two nearly equal evaluations), which is ~2e-10 for loss
/// values around 10 at step 1e-5. Coordinates whose true gradient sits near
/// that noise floor would otherwise show spurious relative error, so they
/// are compared on an absolute scale of `floor` instead.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// Worst relative disagreement between two gradients, with the denominator
/// floored at `floor` (see [`REL_ERROR_FLOOR`]).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
