//! Baseline controllers: uniform random and the rule-based heuristic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spaces::{self, AgentKind, AgentSpec, PressingAction, SortingMode};
use crate::sim::EnvState;

/// A controller for one agent slot.
///
/// Policies see the full plant state and build whatever observation they need.
/// When `mask` is given the returned index must be mask-true.
pub trait Policy {
    fn spec(&self) -> AgentSpec;

    fn name(&self) -> &str;

    fn act(&mut self, state: &EnvState, mask: Option<&[bool]>) -> usize;

    fn is_deterministic(&self) -> bool;
}

/// Uniform over all actions, or over mask-true actions when a mask is given.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    spec: AgentSpec,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(kind: AgentKind, seed: u64) -> Self {
        RandomPolicy {
            spec: kind.spec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, mask: Option<&[bool]>) -> usize {
        match mask {
            None => self.rng.random_range(0..self.spec.n_actions),
            Some(m) => {
                let valid = m.iter().filter(|&&v| v).count();
                assert!(valid > 0, "mask admits no action");
                let k = self.rng.random_range(0..valid);
                m.iter()
                    .enumerate()
                    .filter(|(_, &v)| v)
                    .nth(k)
                    .map(|(i, _)| i)
                    .unwrap()
            }
        }
    }
}

impl Policy for RandomPolicy {
    fn spec(&self) -> AgentSpec {
        self.spec
    }

    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, _state: &EnvState, mask: Option<&[bool]>) -> usize {
        self.sample(mask)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Boost the group with more material on the belt; ties go to group A.
pub fn rule_based_sorting(state: &EnvState) -> SortingMode {
    let [a, b] = state.belt_contents().group_masses();
    if a >= b {
        SortingMode::GroupA
    } else {
        SortingMode::GroupB
    }
}

/// Press the fullest container with the lowest-index idle press.
///
/// Containers at or below `min_fill` are not considered.
pub fn rule_based_pressing(state: &EnvState, min_fill: f64) -> PressingAction {
    let Some(press) = state.presses.iter().position(|p| p.is_idle()) else {
        return PressingAction::NoOp;
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in state.containers.iter().enumerate() {
        let fill = c.fill();
        if c.is_empty() || fill <= min_fill {
            continue;
        }
        if best.is_none_or(|(_, f)| fill > f) {
            best = Some((i, fill));
        }
    }
    match best {
        Some((container, _)) => PressingAction::Press { press, container },
        None => PressingAction::NoOp,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RuleSorting;

impl Policy for RuleSorting {
    fn spec(&self) -> AgentSpec {
        AgentKind::Sorting.spec()
    }

    fn name(&self) -> &str {
        "rule-sort"
    }

    fn act(&mut self, state: &EnvState, _mask: Option<&[bool]>) -> usize {
        rule_based_sorting(state).index()
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RulePressing {
    pub min_fill: f64,
}

impl Policy for RulePressing {
    fn spec(&self) -> AgentSpec {
        AgentKind::Pressing.spec()
    }

    fn name(&self) -> &str {
        "rule-press"
    }

    fn act(&mut self, state: &EnvState, _mask: Option<&[bool]>) -> usize {
        rule_based_pressing(state, self.min_fill).index()
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Convenience: the full rule-based plant action.
pub fn rule_based_action(state: &EnvState, min_fill: f64) -> spaces::Action {
    spaces::Action {
        mode: rule_based_sorting(state),
        press: rule_based_pressing(state, min_fill),
    }
}
