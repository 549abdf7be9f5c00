//! Central finite-difference verification of analytic gradients.

use alloc::format;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, flat coordinate)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the gradients returned by `f` with `(f(x+h) - f(x-h)) / 2h` on every coordinate.
///
/// `f` receives the parameter tensors and returns the scalar value plus one
/// gradient vector per tensor.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    grad_check_subset(f, params, step, usize::MAX)
}

/// Like [`grad_check`] but visits at most `max_per_tensor` evenly strided
/// coordinates of each tensor.
pub fn grad_check_subset<F>(mut f: F, params: &[Tensor], step: f64, max_per_tensor: usize) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    if !(step > 0.0) {
        return Err(Error::argument(format!("finite-difference step must be > 0, got {step}")));
    }
    let (value, analytic) = f(params)?;
    ensure_finite(value)?;
    if analytic.len() != params.len() {
        return Err(Error::shape(format!("{} gradients for {} tensors", analytic.len(), params.len())));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), coordinates: 0 };
    for (ti, grad) in analytic.iter().enumerate() {
        let n = work[ti].len();
        if grad.len() != n {
            return Err(Error::shape(format!("gradient {ti} has {} entries, tensor has {n}", grad.len())));
        }
        let stride = if max_per_tensor == 0 { n.max(1) } else { n.div_ceil(max_per_tensor).max(1) };
        for ci in (0..n).step_by(stride) {
            let orig = work[ti].values()[ci];
            work[ti].values_mut()[ci] = orig + step;
            let plus = f(&work)?.0;
            work[ti].values_mut()[ci] = orig - step;
            let minus = f(&work)?.0;
            work[ti].values_mut()[ci] = orig;
            ensure_finite(plus)?;
            ensure_finite(minus)?;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grad[ci], numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (ti, ci);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

fn ensure_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numerical(format!("function value {v} is not finite")))
    }
}
