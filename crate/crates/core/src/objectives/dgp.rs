//! Deep generative priors: point inversion in the latent space and latent VI.

use crate::autodiff::Real;
use crate::error::{check_dim, Result};
use crate::models::maps::ForwardModel;
use crate::models::params::ParamLayout;
use crate::objectives::bayes::BayesVi;
use crate::objectives::likelihood::{Composed, GaussianLikelihood};
use crate::objectives::{check_positive, norm_with, Loss, Objective};
use crate::pde::observe::NoiseCovariance;
use crate::prob::family::VariationalFamily;
use crate::prob::gaussian::Gaussian;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// `‖G(f(w)) − y‖² + β(‖w‖ − μ_χ)²` over the latent code `w`.
///
/// The ring penalty uses subgradient 0 for `‖w‖` at `w = 0`.
#[derive(Debug, Clone)]
pub struct DgpPoint<G, F, T> {
    pub generator: G,
    pub forward: F,
    pub y: Vec<T>,
    pub beta: T,
    pub mu_chi: T,
}

impl<T: Scalar, G: ForwardModel<T>, F: ForwardModel<T>> DgpPoint<G, F, T> {
    pub fn new(generator: G, forward: F, y: Vec<T>, beta: T, mu_chi: T) -> Result<Self> {
        check_dim("forward input", generator.output_dim(), forward.input_dim())?;
        check_dim("data", forward.output_dim(), y.len())?;
        if beta != T::zero() {
            check_positive("beta", beta)?;
        }
        Ok(Self {
            generator,
            forward,
            y,
            beta,
            mu_chi,
        })
    }

    /// The physical field `z = f(w)`.
    pub fn field(&self, w: &[T]) -> Result<Vec<T>> {
        self.generator.apply(&[], w)
    }
}

impl<T: Scalar, G: ForwardModel<T>, F: ForwardModel<T>> Objective<T> for DgpPoint<G, F, T> {
    fn name(&self) -> &'static str {
        "dgp_point"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new().with("w", self.generator.input_dim())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        rng.normals(self.generator.input_dim())
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], _noise: &RandomStream) -> Result<Loss<R, T>> {
        check_dim("latent code", self.generator.input_dim(), params.len())?;
        let none: [R; 0] = [];
        let z = self.generator.apply_with(&none, params)?;
        let pred = self.forward.apply_with(&none, &z)?;
        let mut misfit = params[0].zero_like();
        for (p, &t) in pred.iter().zip(&self.y) {
            misfit = misfit + (*p - t).square();
        }
        let ring = (norm_with(params) - self.mu_chi).square() * self.beta;
        Ok(Loss {
            value: misfit + ring,
            std_error: T::zero(),
        })
    }
}

pub type LatentVi<Q, G, F, T> = BayesVi<Q, GaussianLikelihood<Composed<G, F>, T>, Gaussian<T>, T>;

/// Bayes VI over the latent code: `p(w) = N(0, I)`, `y ~ N(G(f(w)), Γ)`.
#[derive(Debug, Clone)]
pub struct DgpVi<Q, G, F, T> {
    pub inner: LatentVi<Q, G, F, T>,
}

impl<T: Scalar, Q: VariationalFamily<T>, G: ForwardModel<T>, F: ForwardModel<T>> DgpVi<Q, G, F, T> {
    pub fn new(family: Q, generator: G, forward: F, noise: NoiseCovariance<T>, y: Vec<T>, samples: usize) -> Result<Self> {
        let k = generator.input_dim();
        check_dim("forward input", generator.output_dim(), forward.input_dim())?;
        let lik = GaussianLikelihood::new(
            Composed {
                inner: generator,
                outer: forward,
            },
            noise,
        )?;
        Ok(Self {
            inner: BayesVi::new(family, lik, Gaussian::standard(k)?, y, samples)?,
        })
    }

    /// Posterior field samples `f(w)` with `w ~ q_φ`.
    pub fn push_forward(&self, params: &[T], noise: &RandomStream, count: usize) -> Result<Vec<Vec<T>>> {
        let k = self.inner.family.dim();
        (0..count)
            .map(|s| {
                let eps = noise.substream(s as u64).normals(k);
                let (w, _) = self.inner.family.sample_with(params, &eps, &[])?;
                self.inner.likelihood.map.inner.apply(&[], &w)
            })
            .collect()
    }
}

impl<T: Scalar, Q: VariationalFamily<T>, G: ForwardModel<T>, F: ForwardModel<T>> Objective<T> for DgpVi<Q, G, F, T> {
    fn name(&self) -> &'static str {
        "dgp_vi"
    }

    fn layout(&self) -> ParamLayout {
        self.inner.layout()
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.inner.init_params(rng)
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        self.inner.loss_with(params, noise)
    }
}
