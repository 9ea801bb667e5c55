use crate::autodiff::Real;
use crate::error::{check_dim, Result};
use crate::models::maps::ForwardModel;
use crate::models::mlp::Mlp;
use crate::pde::observe::{gaussian_log_likelihood_with, NoiseCovariance};
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// `log p_θ(y | z)`, possibly with learnable parameters `θ`.
pub trait Likelihood<T: Scalar> {
    fn latent_dim(&self) -> usize;

    fn num_params(&self) -> usize {
        0
    }

    fn init_params(&self, _rng: &RandomStream) -> Vec<T> {
        Vec::new()
    }

    fn log_likelihood_with<R: Real<T>>(&self, theta: &[R], z: &[R], y: &[T]) -> Result<R>;
}

/// `y = G_θ(z) + ε`, `ε ~ N(0, Γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLikelihood<M, T> {
    pub map: M,
    pub noise: NoiseCovariance<T>,
}

impl<T: Scalar, M: ForwardModel<T>> GaussianLikelihood<M, T> {
    pub fn new(map: M, noise: NoiseCovariance<T>) -> Result<Self> {
        check_dim("likelihood noise", map.output_dim(), noise.dim())?;
        Ok(Self { map, noise })
    }

    /// `Γ = σ² I`.
    pub fn isotropic(map: M, sigma: T) -> Result<Self> {
        let d = map.output_dim();
        Self::new(map, NoiseCovariance::isotropic(sigma, d)?)
    }
}

impl<T: Scalar, M: ForwardModel<T>> Likelihood<T> for GaussianLikelihood<M, T> {
    fn latent_dim(&self) -> usize {
        self.map.input_dim()
    }

    fn num_params(&self) -> usize {
        self.map.num_params()
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.map.init_params(rng)
    }

    fn log_likelihood_with<R: Real<T>>(&self, theta: &[R], z: &[R], y: &[T]) -> Result<R> {
        let mean = self.map.apply_with(theta, z)?;
        Ok(gaussian_log_likelihood_with(y, &mean, &self.noise)?.unwrap_or_else(|| z[0].zero_like()))
    }
}

/// `log p(y | z) ≡ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatLikelihood<T> {
    pub dim: usize,
    pub value: T,
}

impl<T: Scalar> Likelihood<T> for FlatLikelihood<T> {
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn log_likelihood_with<R: Real<T>>(&self, _theta: &[R], z: &[R], _y: &[T]) -> Result<R> {
        Ok(z[0].lift(self.value))
    }
}

/// `z ↦ outer(inner(z))` for parameter-free maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Composed<A, B> {
    pub inner: A,
    pub outer: B,
}

impl<T: Scalar, A: ForwardModel<T>, B: ForwardModel<T>> ForwardModel<T> for Composed<A, B> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.outer.output_dim()
    }

    fn apply_with<R: Real<T>>(&self, _theta: &[R], z: &[R]) -> Result<Vec<R>> {
        let none: [R; 0] = [];
        let mid = self.inner.apply_with(&none, z)?;
        self.outer.apply_with(&none, &mid)
    }
}

/// A trained network used as a fixed map (its weights are constants).
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenMlp<T> {
    pub net: Mlp<T>,
}

impl<T: Scalar> ForwardModel<T> for FrozenMlp<T> {
    fn input_dim(&self) -> usize {
        self.net.shape().input_dim()
    }

    fn output_dim(&self) -> usize {
        self.net.shape().output_dim()
    }

    fn apply_with<R: Real<T>>(&self, _theta: &[R], z: &[R]) -> Result<Vec<R>> {
        self.net.shape().forward_frozen_with(self.net.params(), z)
    }
}
