//! Neural function approximators, forward maps, and parameter plumbing.

pub mod checkpoint;
pub mod encoder;
pub mod maps;
pub mod mlp;
pub mod params;
pub mod pinn;

pub use checkpoint::Checkpoint;
pub use encoder::{encoder_moments, AmortizedGaussian};
pub use maps::{ForwardModel, IdentityMap, LinearMap, MlpMap, PoissonMap};
pub use mlp::{Activation, Mlp, MlpGradients, MlpShape};
pub use params::{ParamLayout, ParameterVector};
pub use pinn::{PinnField, PinnTrial};
