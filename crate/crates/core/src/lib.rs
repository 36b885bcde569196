//! Simulation of a two-stage recycling plant (sorting, then baling) exposed
//! as three reinforcement-learning tasks, with baseline controllers, a PPO
//! learner and a benchmark harness.
//!
//! Plant dynamics run in `f64`. The learner is generic over [`num::Scalar`];
//! training uses `f32` and the gradient checks use `f64`.

pub mod bench;
pub mod config;
pub mod error;
pub mod material;
pub mod num;
pub mod policies;
pub mod ppo;
pub mod rewards;
pub mod settings;
pub mod sim;
pub mod spaces;

pub use config::EnvConfig;
pub use bench::{BenchConfig, BenchmarkReport, PolicyId};
pub use error::{ConfigError, Error, Result};
pub use ppo::TrainConfig;
pub use settings::RunConfig;
pub use sim::{EnvState, StepOutputs};
pub use spaces::{Action, AgentKind, PressingAction, SortingMode};

pub type PolicyNetF32 = ppo::MlpPolicy<f32>;
pub type PolicyNetF64 = ppo::MlpPolicy<f64>;
pub type RolloutBufferF32 = ppo::buffer::RolloutBuffer<f32>;
pub type RolloutBufferF64 = ppo::buffer::RolloutBuffer<f64>;
pub type AdamF32 = ppo::adam::Adam<f32>;
pub type AdamF64 = ppo::adam::Adam<f64>;
