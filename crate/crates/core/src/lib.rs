//! Evolutionary population games on networks of communities whose densities
//! co-evolve with the game through a closed migration flow.
//!
//! The state is a matrix `x` of action-by-community masses summing to one.
//! Selection follows a replicator equation weighted by community
//! interaction strengths; migration follows a mass-conserving flow whose
//! rates are modulated by an environmental response that may depend on the
//! densities or carry its own dynamics.

// `!(v > 0.0)` is used on purpose to reject NaN along with non-positive
// values, and indexed loops keep the numeric kernels close to the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod exec;
pub mod model;
pub mod scenario;
pub mod solver;

pub use dynamics::{closed_loop_field, flow_field, replicator_field, Model};
pub use environment::EnvironmentModel;
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{
    community_densities, population_state, CommunityNetwork, ExtendedState, PopulationGame,
    SystemState,
};
pub use scenario::{Scenario, ScenarioDocument};
pub use solver::{integrate, integrate_many, IntegratorConfig, Method, Trajectory};
