//! First-order optimizers and learning-rate schedules.

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind<T> {
    Sgd,
    Adam { beta1: T, beta2: T, eps: T },
}

impl<T: Scalar> OptimizerKind<T> {
    /// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn adam() -> Self {
        Self::Adam {
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule<T> {
    Constant,
    /// Cosine decay from the base rate to `min_lr` over `total` steps, then flat.
    Cosine { total: usize, min_lr: T },
}

impl<T: Scalar> Schedule<T> {
    pub fn rate(&self, base: T, step: usize) -> T {
        match *self {
            Self::Constant => base,
            Self::Cosine { total, min_lr } => {
                if total == 0 || step >= total {
                    return min_lr;
                }
                let t = T::of_usize(step) / T::of_usize(total);
                min_lr + (base - min_lr) * T::of(0.5) * (T::one() + (T::PI() * t).cos())
            }
        }
    }
}

/// Optimizer with its moment buffers and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind<T>,
    pub lr: T,
    pub schedule: Schedule<T>,
    m: Vec<T>,
    v: Vec<T>,
    step: usize,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind<T>, lr: T, num_params: usize) -> Self {
        let buffers = if matches!(kind, OptimizerKind::Adam { .. }) {
            num_params
        } else {
            0
        };
        Self {
            kind,
            lr,
            schedule: Schedule::Constant,
            m: vec![T::zero(); buffers],
            v: vec![T::zero(); buffers],
            step: 0,
        }
    }

    /// Adam with default decay rates and `lr = 1e-3`.
    pub fn adam(num_params: usize) -> Self {
        Self::new(OptimizerKind::adam(), T::of(1e-3), num_params)
    }

    pub fn sgd(lr: T) -> Self {
        Self::new(OptimizerKind::Sgd, lr, 0)
    }

    pub fn with_schedule(mut self, schedule: Schedule<T>) -> Self {
        self.schedule = schedule;
        self
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> T {
        self.schedule.rate(self.lr, self.step)
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        check_dim("gradient", params.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step: self.step });
        }
        let lr = self.current_lr();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                check_dim("Adam moments", self.m.len(), params.len())?;
                let t = i32::try_from(self.step + 1).unwrap_or(i32::MAX);
                let c1 = T::one() - beta1.powi(t);
                let c2 = T::one() - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (T::one() - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (T::one() - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut opt = OptimizerState::<f64>::adam(3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[3.0, -0.5, 1e-3]).unwrap();
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p[1] - (-2.0 + 1e-3)).abs() < 1e-6);
        assert!((p[2] - (0.5 - 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut opt = OptimizerState::<f64>::adam(2);
        let mut p = vec![0.3, 0.7];
        for _ in 0..5 {
            opt.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![0.3, 0.7]);
        assert_eq!(opt.step_count(), 5);
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let mut opt = OptimizerState::<f64>::sgd(0.1);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert_eq!(opt.step(&mut p, &[f64::NAN]), Err(Error::NonFiniteGradient { step: 1 }));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = Schedule::Cosine { total: 100, min_lr: 0.0f64 };
        assert_eq!(s.rate(0.1, 0), 0.1);
        assert!((s.rate(0.1, 50) - 0.05).abs() < 1e-15);
        assert_eq!(s.rate(0.1, 100), 0.0);
    }
}
