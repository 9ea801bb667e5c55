//! Training objectives. Every objective is minimized; maximization targets
//! (ELBOs) are negated. Values and gradients are exact for a given frozen
//! noise stream: sample `s` always draws from `noise.substream(s)`.

pub mod amortized;
pub mod bayes;
pub mod dgp;
pub mod likelihood;
pub mod residual;

use crate::autodiff::{value_and_gradient, Real};
use crate::error::{Error, Result};
use crate::models::params::ParamLayout;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

pub use amortized::{joint_sample, ForwardKl, SurrogateFlow};
pub use bayes::{BayesVi, Elbo, JsVae, Vae};
pub use bayes::JsBreakdown;
pub use dgp::{DgpPoint, DgpVi};
pub use likelihood::{Composed, FlatLikelihood, FrozenMlp, GaussianLikelihood, Likelihood};
pub use residual::{
    residual_log_likelihood, small_data_product_likelihood, Assembler, DataFreeElbo, DataFreeRkl, MeanFieldSmallData,
    ResidualModel, SmallDataLikelihood, VirtualObservable,
};

/// Differentiable objective value with the Monte Carlo standard error of its estimator.
#[derive(Debug, Clone, Copy)]
pub struct Loss<R, T> {
    pub value: R,
    pub std_error: T,
}

/// Value, exact gradient, and standard error at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub std_error: T,
}

/// A scalar training objective written once for plain and taped scalars.
pub trait Objective<T: Scalar> {
    fn name(&self) -> &'static str;
    fn layout(&self) -> ParamLayout;
    fn init_params(&self, rng: &RandomStream) -> Vec<T>;
    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>>;

    /// Value with every detached quantity evaluated at `frozen` instead of
    /// `params`. Its derivative in `params` at `params == frozen` is the tape
    /// gradient, which is what finite-difference checks need.
    fn frozen_value(&self, params: &[T], frozen: &[T], noise: &RandomStream) -> Result<T> {
        let _ = frozen;
        Ok(self.loss_with(params, noise)?.value)
    }
}

/// Object-safe view of an [`Objective`]. Method names differ from the
/// generic trait so both can be in scope.
pub trait DynObjective<T: Scalar> {
    fn label(&self) -> &'static str;
    fn param_layout(&self) -> ParamLayout;
    fn num_params(&self) -> usize {
        self.param_layout().len()
    }
    fn initial_params(&self, rng: &RandomStream) -> Vec<T>;
    fn evaluate(&self, params: &[T], noise: &RandomStream) -> Result<Evaluation<T>>;
    /// Value without gradient (`grad` is empty).
    fn value(&self, params: &[T], noise: &RandomStream) -> Result<Evaluation<T>>;
    /// See [`Objective::frozen_value`].
    fn value_frozen_at(&self, params: &[T], frozen: &[T], noise: &RandomStream) -> Result<T>;
}

impl<T: Scalar, O: Objective<T>> DynObjective<T> for O {
    fn label(&self) -> &'static str {
        self.name()
    }

    fn param_layout(&self) -> ParamLayout {
        self.layout()
    }

    fn initial_params(&self, rng: &RandomStream) -> Vec<T> {
        self.init_params(rng)
    }

    fn evaluate(&self, params: &[T], noise: &RandomStream) -> Result<Evaluation<T>> {
        let (value, grad, std_error) = value_and_gradient(params, |_, vars| {
            let loss = self.loss_with(vars, noise)?;
            Ok::<_, Error>((loss.value, loss.std_error))
        })?;
        Ok(Evaluation {
            value,
            grad,
            std_error,
        })
    }

    fn value(&self, params: &[T], noise: &RandomStream) -> Result<Evaluation<T>> {
        let loss = self.loss_with(params, noise)?;
        Ok(Evaluation {
            value: loss.value,
            grad: Vec::new(),
            std_error: loss.std_error,
        })
    }

    fn value_frozen_at(&self, params: &[T], frozen: &[T], noise: &RandomStream) -> Result<T> {
        self.frozen_value(params, frozen, noise)
    }
}

pub(crate) fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        Err(Error::Parameter {
            name: "samples",
            reason: "need at least one Monte Carlo sample".into(),
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_positive<T: Scalar>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

/// Mean of per-sample terms and the standard error of that mean.
pub(crate) fn mc_mean<T: Scalar, R: Real<T>>(terms: &[R]) -> Loss<R, T> {
    let values: Vec<T> = terms.iter().map(|t| t.value()).collect();
    let (_, se) = crate::prob::divergence::mean_and_std_error(&values);
    Loss {
        value: R::sum(terms) / T::of_usize(terms.len()),
        std_error: se,
    }
}

/// `ln Σ exp(x_i)` for differentiable inputs.
pub(crate) fn log_sum_exp_with<T: Scalar, R: Real<T>>(xs: &[R]) -> R {
    let m = xs.iter().map(|x| x.value()).fold(T::neg_infinity(), T::max);
    let shifted: Vec<R> = xs.iter().map(|&x| (x - m).exp()).collect();
    R::sum(&shifted).ln() + m
}

/// Euclidean norm with subgradient 0 at the origin.
pub(crate) fn norm_with<T: Scalar, R: Real<T>>(w: &[R]) -> R {
    let sq = R::norm_squared(w);
    if sq.value() == T::zero() {
        sq * T::zero()
    } else {
        sq.sqrt()
    }
}
