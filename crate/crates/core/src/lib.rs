//! Variational and physics-informed inference for the 1D Poisson problem
//! `∇·(z ∇u) = f` on an interval with homogeneous Dirichlet ends.
//!
//! Every numeric routine is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` / `*F32` aliases below fix the precision for common types.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod inversion;
pub mod linalg;
pub mod models;
pub mod objectives;
pub mod pde;
pub mod prob;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

macro_rules! precision_aliases {
    ($($m:ident :: $ty:ident => $f64:ident, $f32:ident;)*) => {
        $(
            pub type $f64 = $m::$ty<f64>;
            pub type $f32 = $m::$ty<f32>;
        )*
    };
}

precision_aliases! {
    pde::IntervalMesh => IntervalMeshF64, IntervalMeshF32;
    pde::BasisSet => BasisSetF64, BasisSetF32;
    pde::FieldCoefficients => FieldCoefficientsF64, FieldCoefficientsF32;
    pde::SourceField => SourceFieldF64, SourceFieldF32;
    pde::ObservationModel => ObservationModelF64, ObservationModelF32;
    pde::NoiseCovariance => NoiseCovarianceF64, NoiseCovarianceF32;
    prob::Gaussian => GaussianF64, GaussianF32;
    prob::FlowStack => FlowStackF64, FlowStackF32;
    models::Mlp => MlpF64, MlpF32;
    models::PinnField => PinnFieldF64, PinnFieldF32;
    train::OptimizerState => OptimizerStateF64, OptimizerStateF32;
    train::TrainingTrace => TrainingTraceF64, TrainingTraceF32;
}
