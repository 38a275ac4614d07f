//! Central finite-difference verification of analytic gradients.

use super::mlp::{Gradients, Mlp};
use crate::scalar::Scalar;

/// Magnitude below which gradient entries are compared absolutely rather than relatively.
const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Combines reports from several parameter groups into one.
    pub fn merge(reports: &[GradCheckReport]) -> GradCheckReport {
        let mut merged = GradCheckReport {
            max_relative_error: 0.0,
            worst_index: None,
            checked: 0,
            tolerance: reports.first().map_or(0.0, |r| r.tolerance),
            passed: true,
        };
        for r in reports {
            if r.max_relative_error > merged.max_relative_error {
                merged.max_relative_error = r.max_relative_error;
                merged.worst_index = r.worst_index.map(|i| i + merged.checked);
            }
            merged.checked += r.checked;
            merged.passed &= r.passed;
        }
        merged
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic` against central differences of `loss` over a flat parameter vector.
pub fn check_flat<T, F>(
    params: &[T],
    analytic: &[T],
    mut loss: F,
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    assert_eq!(params.len(), analytic.len(), "analytic gradient length mismatch");
    let mut work = params.to_vec();
    let h = T::lit(step);
    let mut worst = (0.0, None);
    for i in 0..work.len() {
        let original = work[i];
        work[i] = original + h;
        let up = loss(&work).as_f64();
        work[i] = original - h;
        let down = loss(&work).as_f64();
        work[i] = original;
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i].as_f64(), numeric);
        if err > worst.0 || !err.is_finite() {
            worst = (err, Some(i));
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: work.len(),
        tolerance,
        passed: worst.0.is_finite() && worst.0 <= tolerance,
    }
}

/// Checks a backward-pass gradient of a network against central differences of
/// `loss`, evaluated on perturbed copies of `net`.
pub fn finite_diff_check<T, F>(
    net: &Mlp<T>,
    analytic: &Gradients<T>,
    mut loss: F,
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&Mlp<T>) -> T,
{
    let mut probe = net.clone();
    check_flat(
        &net.flat_params(),
        &analytic.flat(),
        |p| {
            probe.set_flat_params(p).expect("same architecture");
            loss(&probe)
        },
        step,
        tolerance,
    )
}
