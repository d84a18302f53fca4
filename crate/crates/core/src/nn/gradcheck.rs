//! Central-difference validation of analytic gradients.

use crate::error::Result;

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are compared on an absolute scale instead of amplifying rounding.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Worst elementwise relative error between the analytic gradient returned by
/// `loss_fn` at `params` and a central difference with the given step.
///
/// `loss_fn` maps a flat parameter vector to `(loss, gradient)` and must be
/// deterministic.
pub fn finite_difference_check<F>(mut loss_fn: F, params: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (_, analytic) = loss_fn(params)?;
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + step;
        let (up, _) = loss_fn(&probe)?;
        probe[i] = params[i] - step;
        let (down, _) = loss_fn(&probe)?;
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let err = finite_difference_check(
            |p| {
                let v = p.iter().map(|x| 3.0 * x * x - x).sum();
                Ok((v, p.iter().map(|x| 6.0 * x - 1.0).collect()))
            },
            &[0.5, -1.25, 2.0],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let err = finite_difference_check(
            |p| Ok((p[0] * p[0], vec![p[0]])),
            &[1.0],
            1e-5,
        )
        .unwrap();
        assert!(err > 0.4);
    }
}
