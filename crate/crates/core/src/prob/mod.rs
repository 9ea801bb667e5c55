//! Probability primitives: random streams, Gaussian and flow variational
//! families, priors, and divergence estimators.

pub mod divergence;
pub mod family;
pub mod flow;
pub mod gaussian;
pub mod prior;
pub mod rng;

pub use divergence::{
    js_alpha, kl_gaussian_closed, kl_monte_carlo, mean_and_std_error, Density, Distribution, DivergenceEstimate,
    FlowDistribution,
};
pub use family::{MeanField, Preconditioned, VariationalFamily};
pub use flow::{FlowLayer, FlowStack};
pub use gaussian::{CovarianceKind, Factor, Gaussian, GaussianVariational, Moments};
pub use prior::{LogUniformPrior, Prior, ProductPrior, UniformPrior};
pub use rng::{NoiseSource, RandomStream};
