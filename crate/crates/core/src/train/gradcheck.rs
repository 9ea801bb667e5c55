//! Central finite-difference gradient checks under frozen noise.

use crate::error::Result;
use crate::objectives::DynObjective;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions<T> {
    pub step: T,
    pub rel_tol: T,
    /// Entries whose absolute discrepancy is below this pass regardless.
    pub abs_floor: T,
}

impl<T: Scalar> Default for GradCheckOptions<T> {
    fn default() -> Self {
        Self {
            step: T::of(1e-4),
            rel_tol: T::of(1e-3),
            abs_floor: T::of(1e-8),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport<T> {
    pub analytic: Vec<T>,
    pub numeric: Vec<T>,
    /// Largest relative error among entries above the absolute floor (0 if none).
    pub max_rel_error: T,
    pub worst_index: Option<usize>,
    pub passed: bool,
}

/// Compares entries and summarizes.
pub fn compare<T: Scalar>(analytic: Vec<T>, numeric: Vec<T>, opts: &GradCheckOptions<T>) -> GradCheckReport<T> {
    let mut max_rel = T::zero();
    let mut worst = None;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let diff = (a - n).abs();
        if diff <= opts.abs_floor {
            continue;
        }
        let rel = diff / a.abs().max(n.abs());
        if !(rel <= max_rel) {
            max_rel = rel;
            worst = Some(i);
        }
    }
    GradCheckReport {
        passed: max_rel < opts.rel_tol && analytic.len() == numeric.len(),
        analytic,
        numeric,
        max_rel_error: max_rel,
        worst_index: worst,
    }
}

/// Central differences of `f` at `x`.
pub fn finite_difference<T: Scalar>(mut f: impl FnMut(&[T]) -> Result<T>, x: &[T], step: T) -> Result<Vec<T>> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + step;
            let fp = f(&p)?;
            p[i] = x[i] - step;
            let fm = f(&p)?;
            p[i] = x[i];
            Ok((fp - fm) / (step + step))
        })
        .collect()
}

/// Checks an objective's tape gradient at `params` with `noise` held fixed.
pub fn check_gradient<T: Scalar>(
    objective: &dyn DynObjective<T>,
    params: &[T],
    noise: &RandomStream,
    opts: &GradCheckOptions<T>,
) -> Result<GradCheckReport<T>> {
    let eval = objective.evaluate(params, noise)?;
    let numeric = finite_difference(|p| objective.value_frozen_at(p, params, noise), params, opts.step)?;
    // central differences cannot resolve below the rounding noise of the value itself
    let rounding = T::of(16.0) * T::epsilon() * eval.value.abs() / opts.step;
    let opts = GradCheckOptions {
        abs_floor: opts.abs_floor.max(rounding),
        ..*opts
    };
    Ok(compare(eval.grad, numeric, &opts))
}
