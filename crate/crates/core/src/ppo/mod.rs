//! Proximal policy optimization: network, masked distribution, rollouts,
//! clipped-surrogate updates, checkpoints and the training pipelines.

pub mod adam;
pub mod buffer;
pub mod checkpoint;
pub mod distribution;
pub mod gradcheck;
pub mod nn;
pub mod train;
pub mod update;

pub use checkpoint::Checkpoint;
pub use nn::MlpPolicy;
pub use train::{train_monolithic, train_pressing, train_sorting, CurveRow, PolicyArtifact, TrainConfig};

use crate::num::Scalar;
use crate::policies::Policy;
use crate::sim::EnvState;
use crate::spaces::{self, AgentKind, AgentSpec};

/// Trained network acting greedily (argmax over valid actions).
#[derive(Debug, Clone)]
pub struct GreedyPolicy<T> {
    kind: AgentKind,
    name: String,
    net: MlpPolicy<T>,
}

impl<T: Scalar> GreedyPolicy<T> {
    pub fn new(kind: AgentKind, name: impl Into<String>, net: MlpPolicy<T>) -> Self {
        GreedyPolicy {
            kind,
            name: name.into(),
            net,
        }
    }
}

impl GreedyPolicy<f32> {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Self {
        GreedyPolicy::new(ckpt.kind, format!("ppo-{}", ckpt.kind), ckpt.net.clone())
    }
}

impl<T: Scalar> Policy for GreedyPolicy<T> {
    fn spec(&self) -> AgentSpec {
        self.kind.spec()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: &EnvState, mask: Option<&[bool]>) -> usize {
        let obs = spaces::observation(self.kind, state);
        train::greedy_action(&self.net, &obs, mask).expect("observation length matches the agent spec")
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
