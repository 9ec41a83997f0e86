//! Adaptive transmit-power policies for energy-harvesting sensor networks
//! performing binary distributed detection.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod simulator;
pub mod special;

pub use battery::{build_chain, clipped_poisson, interval_probs, BatteryChain};
pub use error::{Error, Result};
pub use metrics::{evaluate_policy, PolicyEvaluation, SensorSetup};
pub use model::{EnergyModel, LocalDetector, NetworkConfig, Policy, Priors, SensorParams};
pub use optimizer::{solve, solve_p1, Candidate, GridSpec, Method, Problem, RrsParams, SearchSpace, SolverSettings};
pub use simulator::{run_monte_carlo, Fusion, SimConfig, SimResult};
