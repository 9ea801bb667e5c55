//! Point-estimate inversion: Tikhonov least squares and physics-regularized
//! joint estimation of the state and the coefficient field.

pub mod lbfgs;
pub mod physics;
pub mod tikhonov;

pub use lbfgs::{lbfgs, LbfgsOptions, LbfgsReport};
pub use physics::{physics_regularized_invert, PhysicsInverseSpec, PhysicsResult};
pub use tikhonov::{tikhonov_invert, tikhonov_objective, ForwardBinding, InverseProblemSpec, TikhonovResult};
