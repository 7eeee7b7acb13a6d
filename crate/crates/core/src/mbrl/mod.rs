//! Model-based RL on a cart-pole swing-up: environment, learned dynamics, trajectory
//! sampling, CEM planning, and the episode loop.

pub mod cem;
pub mod dynamics;
pub mod env;
pub mod pets;
pub mod rollout;

pub use cem::{cem_optimize, cem_plan, CemConfig, CemOutcome, Planner};
pub use dynamics::{fit_dynamics, DynamicsConfig, DynamicsKind, DynamicsModel, Transition, RL_PRIOR_VARIANCE};
pub use env::{cartpole_step, EnvState};
pub use pets::{pets_loop, EpisodeLog, PetsConfig, PetsRun};
pub use rollout::{ts_rollout, TrajectorySampler};
