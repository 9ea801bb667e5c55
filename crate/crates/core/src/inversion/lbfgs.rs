//! Limited-memory BFGS with backtracking Armijo line search.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::trainer::{TraceRecord, TrainingTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions<T> {
    pub max_iters: usize,
    /// Stop once `‖∇f‖₂ ≤ gtol`.
    pub gtol: T,
    pub memory: usize,
}

impl<T: Scalar> Default for LbfgsOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 500,
            gtol: T::of(1e-6),
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsReport<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub values: Vec<T>,
    /// The same steps with gradient norms and elapsed time.
    pub trace: TrainingTrace<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Errors a line search may step back from rather than propagate.
fn recoverable(e: &Error) -> bool {
    matches!(e, Error::Ellipticity { .. } | Error::Numeric { .. } | Error::SupportViolation(_))
}

/// Minimizes `f`, which returns the value and gradient at a point.
///
/// Accepted steps satisfy the Armijo condition, so recorded values never
/// increase beyond rounding (a step whose value differs by a few ulps is
/// taken only if it flattens the directional slope). Trial points where `f` reports a recoverable numeric failure
/// are treated as infinitely bad and the step is shortened.
pub fn lbfgs<T: Scalar, F>(mut f: F, x0: Vec<T>, opts: &LbfgsOptions<T>) -> Result<LbfgsReport<T>>
where
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    let start = Instant::now();
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::Numeric {
            context: "initial objective",
            layer: None,
        });
    }
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::new();
    let mut values = vec![fx];
    let c1 = T::of(1e-4);
    let mut iterations = 0;
    let mut gnorm = dot(&g, &g).sqrt();
    let mut trace = TrainingTrace::default();
    let mut record = |step: usize, value: T, grad_norm: T| {
        trace.records.push(TraceRecord {
            step,
            objective: value,
            grad_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    };
    record(0, fx, gnorm);
    while iterations < opts.max_iters && gnorm > opts.gtol {
        let mut d = two_loop(&g, &history);
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            history.clear();
            d = g.iter().map(|&v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if history.is_empty() {
            T::one().min(T::one() / gnorm)
        } else {
            T::one()
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + step * di).collect();
            match f(&trial) {
                Ok((ft, gt)) if ft.is_finite() => {
                    if ft <= fx + c1 * step * slope && trial != x {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                    // Below rounding resolution the Armijo test is meaningless;
                    // accept a value equal to within a few ulps if the slope shrank.
                    let flat = (ft - fx).abs() <= T::of(4.0) * T::epsilon() * fx.abs().max(T::min_positive_value());
                    if flat && dot(&gt, &d).abs() < T::of(0.9) * slope.abs() {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                Ok(_) => {}
                Err(e) if recoverable(&e) => {}
                Err(e) => return Err(e),
            }
            step *= T::of(0.5);
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, T::one() / sy));
        }
        x = xn;
        fx = fnew;
        g = gn;
        gnorm = dot(&g, &g).sqrt();
        values.push(fx);
        iterations += 1;
        record(iterations, fx, gnorm);
    }
    Ok(LbfgsReport {
        converged: gnorm <= opts.gtol,
        x,
        value: fx,
        grad_norm: gnorm,
        iterations,
        values,
        trace,
    })
}

fn two_loop<T: Scalar>(g: &[T], history: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qi, &si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|&v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((v, g))
        };
        let r = lbfgs(f, vec![-1.2, 1.0], &LbfgsOptions { gtol: 1e-10, ..Default::default() }).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
        assert!(r.values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn steps_back_from_recoverable_failures() {
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                return Err(Error::Ellipticity { x: 0.0, value: x[0] });
            }
            Ok((x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]]))
        };
        let r = lbfgs(f, vec![0.05], &LbfgsOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6);
    }
}
