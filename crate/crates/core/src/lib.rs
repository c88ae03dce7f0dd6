//! Multilevel Picard (MLP) approximation of semilinear heat equations
//! `∂ₜu = Δu + f(u)` in high dimension, with linear Monte Carlo baselines,
//! deterministic reference oracles, and a cost-accounting benchmark harness.

pub mod bench;
pub mod cli;
pub mod error;
pub mod mlp;
pub mod model;
pub mod oracles;
pub(crate) mod parallel;
pub mod rng;

pub use error::{Error, Result};
pub use mlp::{mlp_estimate, mlp_estimate_parallel, predict_cost, theorem_schedule, EstimateRecord, MlpLevel, MlpOptions, MlpSolver};
pub use model::{CostLedger, DefaultRisk, DiffusionModel, InitialValue, Interval, Nonlinearity, SemilinearProblem};
pub use rng::{GaussianVector, StreamKey};
