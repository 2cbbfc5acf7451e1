//! Smooth L1 loss.
//!
//! Per element `z = 0.5 d²` when `|d| < 1` and `|d| − 0.5` otherwise, with
//! `d = y − ŷ`; the loss is the mean of `z` over the vector.

use crate::error::{check_dim, Result};

#[inline]
pub fn smooth_l1_term(d: f64) -> f64 {
    let a = d.abs();
    if a < 1.0 {
        0.5 * d * d
    } else {
        a - 0.5
    }
}

/// Derivative of the per-element term with respect to `ŷ`, given `e = ŷ − y`.
#[inline]
pub fn smooth_l1_term_grad(e: f64) -> f64 {
    e.clamp(-1.0, 1.0)
}

pub fn smooth_l1(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_dim("prediction length", y.len(), y_hat.len())?;
    if y.is_empty() {
        return Ok(0.0);
    }
    Ok(smooth_l1_unchecked(y, y_hat))
}

#[inline]
pub(crate) fn smooth_l1_unchecked(y: &[f64], y_hat: &[f64]) -> f64 {
    let s: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| smooth_l1_term(a - b))
        .sum();
    s / y.len() as f64
}

/// Gradient of [`smooth_l1`] with respect to `y_hat`.
pub fn smooth_l1_grad(y: &[f64], y_hat: &[f64]) -> Result<Vec<f64>> {
    check_dim("prediction length", y.len(), y_hat.len())?;
    let m = y.len() as f64;
    Ok(y.iter()
        .zip(y_hat)
        .map(|(a, b)| smooth_l1_term_grad(b - a) / m)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(smooth_l1(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(smooth_l1(&[0.5], &[0.0]).unwrap(), 0.125);
        assert_eq!(smooth_l1(&[2.0], &[0.0]).unwrap(), 1.5);
        assert_eq!(smooth_l1(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 0.75);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(smooth_l1(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn branches_meet_with_matching_slope() {
        for eps in [1e-6, 1e-9, 1e-12] {
            let below = smooth_l1_term(1.0 - eps);
            let above = smooth_l1_term(1.0 + eps);
            assert!((below - above).abs() < 3.0 * eps);
            let slope_below = smooth_l1_term_grad(1.0 - eps);
            let slope_above = smooth_l1_term_grad(1.0 + eps);
            assert!((slope_below - slope_above).abs() <= eps * 1.01);
        }
        assert_eq!(smooth_l1_term(1.0), 0.5);
    }

    #[test]
    fn linear_branch_gradient_is_one_over_m() {
        let y = [0.0, 0.0, 0.0, 0.0];
        let g = smooth_l1_grad(&y, &[3.0, -2.5, 0.2, 0.0]).unwrap();
        assert_eq!(g[0], 0.25);
        assert_eq!(g[1], -0.25);
        assert!((g[2] - 0.05).abs() < 1e-15);
        assert_eq!(g[3], 0.0);
    }
}
