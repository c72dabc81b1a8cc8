//! Analytic-gradient verification against central finite differences.

use crate::error::{Error, Result};

/// Compare an analytic gradient to central finite differences of the loss.
///
/// For every coordinate i the numeric gradient is
/// `(loss(p + eps*e_i) - loss(p - eps*e_i)) / (2*eps)` and the reported error
/// is `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`. Returns the
/// maximum over all coordinates.
pub fn grad_check<L, G>(mut loss_fn: L, grad_fn: G, params: &[f64], eps: f64) -> Result<f64>
where
    L: FnMut(&[f64]) -> Result<f64>,
    G: FnOnce(&[f64]) -> Result<Vec<f64>>,
{
    if eps <= 0.0 {
        return Err(Error::Config(format!(
            "grad_check eps must be positive: got {eps}"
        )));
    }
    let analytic = grad_fn(params)?;
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "grad_check",
            format!("{} params", params.len()),
            format!("{} gradient entries", analytic.len()),
        ));
    }

    let mut work = params.to_vec();
    let mut max_err = 0.0f64;
    for i in 0..work.len() {
        let original = work[i];
        work[i] = original + eps;
        let plus = loss_fn(&work)?;
        work[i] = original - eps;
        let minus = loss_fn(&work)?;
        work[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at coordinate {i} perturbation: {plus} / {minus}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-8);
        let err = (analytic[i] - numeric).abs() / denom;
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        let loss = |p: &[f64]| Ok(p[0] * p[0]);
        let grad = |p: &[f64]| Ok(vec![2.0 * p[0]]);
        let err = grad_check(loss, grad, &[3.0], 1e-4).unwrap();
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // analytic p (=3) vs numeric 2p (=6): |6-3|/(6+3) = 1/3
        let loss = |p: &[f64]| Ok(p[0] * p[0]);
        let grad = |p: &[f64]| Ok(vec![p[0]]);
        let err = grad_check(loss, grad, &[3.0], 1e-4).unwrap();
        assert!((err - 1.0 / 3.0).abs() < 1e-6, "err = {err}");
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let loss = |p: &[f64]| Ok(1.0 / (p[0] - p[0]));
        let grad = |_: &[f64]| Ok(vec![0.0]);
        let err = grad_check(loss, grad, &[1.0], 1e-4);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn invalid_eps_rejected() {
        let loss = |p: &[f64]| Ok(p[0]);
        let grad = |_: &[f64]| Ok(vec![1.0]);
        assert!(grad_check(loss, grad, &[1.0], 0.0).is_err());
    }

    #[test]
    fn multi_coordinate_max_is_reported() {
        // loss = p0^2 + p1^2; correct grad on p0, broken on p1
        let loss = |p: &[f64]| Ok(p[0] * p[0] + p[1] * p[1]);
        let grad = |p: &[f64]| Ok(vec![2.0 * p[0], 0.0]);
        let err = grad_check(loss, grad, &[1.0, 2.0], 1e-4).unwrap();
        // numeric on p1 is 4, analytic 0 -> |4|/4 = 1
        assert!((err - 1.0).abs() < 1e-6, "err = {err}");
    }
}
