//! Run-time choice of unconditional variational family.

use varphys::autodiff::Real;
use varphys::prob::{FlowStack, Gaussian, GaussianVariational, RandomStream, VariationalFamily};
use varphys::Result;

use crate::config::{FamilyKind, ModelConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub enum AnyFamily {
    Gaussian(GaussianVariational),
    Flow(FlowStack<f64>),
}

impl AnyFamily {
    pub fn from_config(model: Option<&ModelConfig>, dim: usize) -> CliResult<Self> {
        let at = |e| CliError::setup("model", e);
        let kind = model.map_or(FamilyKind::GaussianDiag, |m| m.family);
        Ok(match kind {
            FamilyKind::GaussianDiag => Self::Gaussian(GaussianVariational::diagonal(dim).map_err(at)?),
            FamilyKind::GaussianFull => Self::Gaussian(GaussianVariational::full(dim).map_err(at)?),
            FamilyKind::Flow => {
                let m = model.expect("flow family comes from a model block");
                Self::Flow(FlowStack::new(dim, 0, m.couplings, &m.hidden).map_err(at)?)
            }
        })
    }

    /// Mean and row-major covariance: exact for Gaussians, from `draws`
    /// samples of `stream` otherwise.
    pub fn moments(&self, params: &[f64], draws: usize, stream: &RandomStream) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Gaussian(g) => {
                let d = g.distribution(params)?;
                Ok((d.mean().to_vec(), d.covariance()))
            }
            Self::Flow(f) => {
                let samples = (0..draws)
                    .map(|s| Ok(f.sample(params, &stream.substream(s as u64).normals(f.dim()), &[])?.0))
                    .collect::<Result<Vec<_>>>()?;
                Ok(sample_moments(&samples))
            }
        }
    }
}

/// Sample mean and unbiased covariance.
pub fn sample_moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let d = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0).max(1.0);
            }
        }
    }
    (mean, cov)
}

impl VariationalFamily<f64> for AnyFamily {
    fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => VariationalFamily::<f64>::dim(g),
            Self::Flow(f) => f.dim(),
        }
    }

    fn cond_dim(&self) -> usize {
        match self {
            Self::Gaussian(_) => 0,
            Self::Flow(f) => f.cond_dim(),
        }
    }

    fn num_params(&self) -> usize {
        match self {
            Self::Gaussian(g) => VariationalFamily::<f64>::num_params(g),
            Self::Flow(f) => f.num_params(),
        }
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<f64> {
        match self {
            Self::Gaussian(g) => VariationalFamily::<f64>::init_params(g, rng),
            Self::Flow(f) => f.init_params(rng),
        }
    }

    fn sample_with<R: Real<f64>>(&self, params: &[R], eps: &[f64], cond: &[f64]) -> Result<(Vec<R>, R)> {
        match self {
            Self::Gaussian(g) => g.sample_with(params, eps, cond),
            Self::Flow(f) => f.sample_with(params, eps, cond),
        }
    }

    fn log_density_with<R: Real<f64>>(&self, params: &[R], z: &[R], cond: &[f64]) -> Result<R> {
        match self {
            Self::Gaussian(g) => g.log_density_with(params, z, cond),
            Self::Flow(f) => f.log_density_with(params, z, cond),
        }
    }

    fn kl_to_gaussian_with<R: Real<f64>>(&self, params: &[R], cond: &[f64], p: &Gaussian<f64>) -> Option<Result<R>> {
        match self {
            Self::Gaussian(g) => g.kl_to_gaussian_with(params, cond, p),
            Self::Flow(_) => None,
        }
    }
}
