//! Deterministic first-order training with gradient checking and traces.

pub mod gradcheck;
pub mod optim;
pub mod trainer;

pub use gradcheck::{check_gradient, compare, finite_difference, GradCheckOptions, GradCheckReport};
pub use optim::{OptimizerKind, OptimizerState, Schedule};
pub use trainer::{step_noise, train, TraceRecord, TrainConfig, TrainOutcome, TrainingTrace};
