use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::models::mlp::{Activation, Mlp, MlpShape};
use crate::prob::family::VariationalFamily;
use crate::prob::gaussian::{CovarianceKind, Factor, Gaussian, Moments};
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// Amortized Gaussian `q(z | c) = N(m(c), L(c) L(c)ᵀ)` from two networks.
///
/// The factor network emits `d` softplus-positive standard deviations
/// (diagonal) or the `d(d+1)/2` row-major lower-triangular entries with a
/// softplus-positive diagonal (full). Parameters: mean network, then factor network.
#[derive(Debug, Clone, PartialEq)]
pub struct AmortizedGaussian {
    dim: usize,
    kind: CovarianceKind,
    mean_net: MlpShape,
    factor_net: MlpShape,
}

fn factor_width(kind: CovarianceKind, d: usize) -> usize {
    match kind {
        CovarianceKind::Diagonal => d,
        CovarianceKind::Full => d * (d + 1) / 2,
    }
}

fn factor_from_output<T: Scalar, R: Real<T>>(kind: CovarianceKind, d: usize, out: &[R]) -> Factor<R> {
    match kind {
        CovarianceKind::Diagonal => Factor::Diagonal(out.iter().map(|o| o.softplus()).collect()),
        CovarianceKind::Full => {
            let zero = out[0].zero_like();
            let mut l = vec![zero; d * d];
            let mut k = 0;
            for i in 0..d {
                for j in 0..=i {
                    l[i * d + j] = if i == j { out[k].softplus() } else { out[k] };
                    k += 1;
                }
            }
            Factor::Lower(l)
        }
    }
}

impl AmortizedGaussian {
    pub fn new(dim: usize, cond_dim: usize, hidden: &[usize], kind: CovarianceKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter {
                name: "dimension",
                reason: "encoder needs at least one latent dimension".into(),
            });
        }
        Ok(Self {
            dim,
            kind,
            mean_net: MlpShape::dense(cond_dim, hidden, dim, Activation::Tanh)?,
            factor_net: MlpShape::dense(cond_dim, hidden, factor_width(kind, dim), Activation::Tanh)?,
        })
    }

    /// From explicit network shapes.
    pub fn from_shapes(mean_net: MlpShape, factor_net: MlpShape, kind: CovarianceKind) -> Result<Self> {
        let dim = mean_net.output_dim();
        check_dim("factor network output", factor_width(kind, dim), factor_net.output_dim())?;
        check_dim("factor network input", mean_net.input_dim(), factor_net.input_dim())?;
        Ok(Self {
            dim,
            kind,
            mean_net,
            factor_net,
        })
    }

    pub fn mean_net(&self) -> &MlpShape {
        &self.mean_net
    }

    pub fn factor_net(&self) -> &MlpShape {
        &self.factor_net
    }

    fn split<'a, X>(&self, params: &'a [X]) -> Result<(&'a [X], &'a [X])> {
        check_dim("encoder parameters", self.num_params(), params.len())?;
        Ok(params.split_at(self.mean_net.num_params()))
    }

    /// Moments for a constant conditioning input.
    pub fn moments_const_with<T: Scalar, R: Real<T>>(&self, params: &[R], cond: &[T]) -> Result<Moments<R>> {
        let (pm, pf) = self.split(params)?;
        let mean = self.mean_net.forward_const_with(pm, cond)?;
        let out = self.factor_net.forward_const_with(pf, cond)?;
        Ok(Moments {
            mean,
            factor: factor_from_output(self.kind, self.dim, &out),
        })
    }

    /// Moments for a differentiable conditioning input.
    pub fn moments_with<T: Scalar, R: Real<T>>(&self, params: &[R], cond: &[R]) -> Result<Moments<R>> {
        let (pm, pf) = self.split(params)?;
        let mean = self.mean_net.forward_with(pm, cond)?;
        let out = self.factor_net.forward_with(pf, cond)?;
        Ok(Moments {
            mean,
            factor: factor_from_output(self.kind, self.dim, &out),
        })
    }

    pub fn num_params(&self) -> usize {
        self.mean_net.num_params() + self.factor_net.num_params()
    }
}

/// `q(z | y)` with mean `net_m(y)` and factor built from `net_l(y)`.
pub fn encoder_moments<T: Scalar>(net_m: &Mlp<T>, net_l: &Mlp<T>, kind: CovarianceKind, y: &[T]) -> Result<Gaussian<T>> {
    let enc = AmortizedGaussian::from_shapes(net_m.shape().clone(), net_l.shape().clone(), kind)?;
    let mut params = net_m.params().to_vec();
    params.extend_from_slice(net_l.params());
    enc.moments_const_with(&params, y)?.to_gaussian()
}

impl<T: Scalar> VariationalFamily<T> for AmortizedGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cond_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    fn num_params(&self) -> usize {
        AmortizedGaussian::num_params(self)
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = self.mean_net.init(&rng.substream(0));
        p.extend(self.factor_net.init::<T>(&rng.substream(1)));
        p
    }

    fn sample_with<R: Real<T>>(&self, params: &[R], eps: &[T], cond: &[T]) -> Result<(Vec<R>, R)> {
        check_dim("encoder noise", self.dim, eps.len())?;
        let m = self.moments_const_with(params, cond)?;
        Ok((m.transform(eps), m.log_density_at_noise(eps)))
    }

    fn log_density_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<R> {
        check_dim("encoder point", self.dim, z.len())?;
        Ok(self.moments_const_with(params, cond)?.log_density(z))
    }

    fn kl_to_gaussian_with<R: Real<T>>(&self, params: &[R], cond: &[T], p: &Gaussian<T>) -> Option<Result<R>> {
        Some(self.moments_const_with(params, cond).and_then(|m| m.kl_to(p)))
    }
}
