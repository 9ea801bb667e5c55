//! Weighted-residual discretization of the 1D Poisson problem `∇·(z ∇u) = f`
//! on an interval with homogeneous Dirichlet boundary conditions.

pub mod basis;
pub mod field;
pub mod mesh;
pub mod observe;
pub mod residual;
pub mod solve;

pub use basis::{BasisKind, BasisSet};
pub use field::{AnalyticField, FieldCoefficients, SmoothField, SourceField, TrialField};
pub use mesh::IntervalMesh;
pub use observe::{gaussian_log_likelihood, gaussian_log_likelihood_with, observe, NoiseCovariance, ObservationModel};
pub use residual::{assemble_strong_residual, assemble_weak_residual, ResidualVector, TestFunctions};
pub use solve::{solve_poisson_fem, solve_with};
