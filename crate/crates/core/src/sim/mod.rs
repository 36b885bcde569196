//! Discrete-time simulation of the sorting and pressing plant.
//!
//! Each call to [`EnvState::step`] runs these phases in order:
//!
//! 1. apply the sorting mode
//! 2. sample the machine's accuracies for that mode
//! 3. generate input and advance the belt
//! 4. sort the machine's load into the containers, then load the delivered slot
//! 5. execute the pressing sub-action
//! 6. tick press timers
//! 7. compute rewards
//! 8. build observations and masks; advance the step counter
//!
//! The sorting machine holds one belt slot: material delivered at step `t`
//! is sorted at step `t + 1`.

pub mod dynamics;
pub mod plant;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dynamics::PressOutcome;
pub use plant::{Bale, Container, Press, PressStatus};

use crate::config::{EnvConfig, N_CONTAINERS, N_PRESSES};
use crate::error::{Error, Result};
use crate::material::MaterialVector;
use crate::rewards;
use crate::spaces::{self, Action, PressingAction, SortingMode, MONO_ACTIONS, MONO_OBS, PRESS_ACTIONS, PRESS_OBS, SORT_OBS};

/// Independent random streams derived from one episode seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub input: ChaCha8Rng,
    pub accuracy: ChaCha8Rng,
}

impl RngStreams {
    const INPUT_STREAM: u64 = 1;
    const ACCURACY_STREAM: u64 = 2;

    pub fn from_seed(seed: u64) -> Self {
        let mut input = ChaCha8Rng::seed_from_u64(seed);
        input.set_stream(Self::INPUT_STREAM);
        let mut accuracy = ChaCha8Rng::seed_from_u64(seed);
        accuracy.set_stream(Self::ACCURACY_STREAM);
        RngStreams { input, accuracy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingMachine {
    pub load: MaterialVector,
    pub mode: SortingMode,
    pub accuracies: [f64; 2],
}

/// Volume bookkeeping used by the conservation check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    /// Volume admitted onto the belt.
    pub input_total: f64,
    pub pressed_total: f64,
    pub overflow_lost: f64,
    /// Volume offered by the source but not yet admitted.
    pub withheld: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub sort: f64,
    pub press_state: f64,
    pub press_action: f64,
    pub press: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Step index (0-based) that this output belongs to.
    pub step: usize,
    pub action: Action,
    pub input: MaterialVector,
    pub outcome: PressOutcome,
    pub overflow: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutputs {
    pub sorting_obs: [f64; SORT_OBS],
    pub pressing_obs: [f64; PRESS_OBS],
    pub monolithic_obs: [f64; MONO_OBS],
    pub rewards: RewardBreakdown,
    pub pressing_mask: [bool; PRESS_ACTIONS],
    pub monolithic_mask: [bool; MONO_ACTIONS],
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub config: EnvConfig,
    pub seed: u64,
    pub step: usize,
    /// Oldest slot first.
    pub belt: VecDeque<MaterialVector>,
    pub source_backlog: MaterialVector,
    pub machine: SortingMachine,
    pub containers: Vec<Container>,
    pub presses: Vec<Press>,
    pub rng: RngStreams,
    pub accounting: Accounting,
    pub ignored_presses: usize,
}

impl EnvState {
    pub fn reset(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStreams::from_seed(seed);
        let mode = SortingMode::GroupA;
        let accuracies = dynamics::sample_accuracies(&mut rng.accuracy, mode, &config);
        let containers = (0..N_CONTAINERS)
            .map(|i| Container::new(i, config.container_capacity, config.purity_thresholds[i]))
            .collect();
        Ok(EnvState {
            belt: std::iter::repeat_n(MaterialVector::ZERO, config.belt_delay_steps).collect(),
            source_backlog: MaterialVector::ZERO,
            machine: SortingMachine {
                load: MaterialVector::ZERO,
                mode,
                accuracies,
            },
            containers,
            presses: vec![Press::default(); N_PRESSES],
            rng,
            accounting: Accounting::default(),
            ignored_presses: 0,
            step: 0,
            seed,
            config,
        })
    }

    pub fn is_truncated(&self) -> bool {
        self.step >= self.config.episode_length
    }

    pub fn belt_mass(&self) -> f64 {
        self.belt.iter().map(MaterialVector::total).sum()
    }

    pub fn belt_contents(&self) -> MaterialVector {
        self.belt.iter().fold(MaterialVector::ZERO, |acc, v| acc + *v)
    }

    pub fn machine_mass(&self) -> f64 {
        self.machine.load.total()
    }

    pub fn container_mass(&self) -> f64 {
        self.containers.iter().map(Container::fill).sum()
    }

    pub fn purities(&self) -> [f64; N_CONTAINERS] {
        std::array::from_fn(|i| self.containers[i].purity())
    }

    pub fn thresholds(&self) -> [f64; N_CONTAINERS] {
        std::array::from_fn(|i| self.containers[i].threshold)
    }

    /// Total fill over total capacity.
    pub fn fill_ratio(&self) -> f64 {
        let cap: f64 = self.containers.iter().map(|c| c.capacity).sum();
        (self.container_mass() / cap).clamp(0.0, 1.0)
    }

    /// Signed conservation residual: admitted input minus everything accounted for.
    pub fn mass_residual(&self) -> f64 {
        let a = &self.accounting;
        a.input_total
            - (self.belt_mass() + self.machine_mass() + self.container_mass() + a.pressed_total + a.overflow_lost)
    }

    pub fn mass_conserved(&self, rel_tol: f64) -> bool {
        self.mass_residual().abs() <= rel_tol * self.accounting.input_total.max(1.0)
    }

    /// All bales produced so far, ordered by creation step then press.
    pub fn bales(&self) -> Vec<Bale> {
        let mut all: Vec<Bale> = self.presses.iter().flat_map(|p| p.history.iter().cloned()).collect();
        all.sort_by_key(|b| (b.created_at, b.press));
        all
    }

    pub fn rewards(&self, outcome: &PressOutcome) -> RewardBreakdown {
        let w = self.config.reward_weights();
        let sort = rewards::sorting_reward(&self.purities(), &self.thresholds(), w.alpha);
        let press_state = rewards::pressing_state_reward(self.fill_ratio(), w.fill_weight);
        let press_action = outcome
            .bales()
            .map_or(0.0, |b| rewards::pressing_action_reward(b, w.bale_bonus));
        let press = press_state + press_action;
        RewardBreakdown {
            sort,
            press_state,
            press_action,
            press,
            total: rewards::monolithic_reward(sort, press),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutputs> {
        if self.is_truncated() {
            return Err(Error::EpisodeFinished(self.step));
        }
        if let PressingAction::Press { press, container } = action.press {
            if press >= N_PRESSES || container >= N_CONTAINERS {
                return Err(Error::Contract(format!(
                    "press action (press {press}, container {container}) out of range"
                )));
            }
        }
        let now = self.step;
        let cfg = &self.config;

        self.machine.mode = action.mode;
        self.machine.accuracies = dynamics::sample_accuracies(&mut self.rng.accuracy, action.mode, cfg);

        let input = dynamics::generate_input(&mut self.rng.input, cfg);
        let offered = self.source_backlog + input;
        let (delivered, admitted, withheld) = dynamics::advance_belt(&mut self.belt, offered, cfg.belt_capacity);
        self.source_backlog = withheld;
        self.accounting.input_total += admitted.total();
        self.accounting.withheld = withheld.total();

        let (_, overflow) = dynamics::sort_material(&self.machine.load, self.machine.accuracies, &mut self.containers);
        self.machine.load = delivered;
        self.accounting.overflow_lost += overflow;

        let outcome = match action.press {
            PressingAction::NoOp => PressOutcome::NoOp,
            PressingAction::Press { press, container } => {
                let (outcome, volume) =
                    dynamics::execute_press(&mut self.presses, &mut self.containers, press, container, cfg, now)?;
                self.accounting.pressed_total += volume;
                outcome
            }
        };
        if outcome.is_ignored() {
            self.ignored_presses += 1;
        }

        for press in &mut self.presses {
            press.tick();
        }

        let rewards = self.rewards(&outcome);

        self.step += 1;
        let truncated = self.is_truncated();
        Ok(StepOutputs {
            sorting_obs: spaces::sorting_observation(self),
            pressing_obs: spaces::pressing_observation(self),
            monolithic_obs: spaces::monolithic_observation(self),
            rewards,
            pressing_mask: spaces::pressing_action_mask(self),
            monolithic_mask: spaces::monolithic_action_mask(self),
            info: StepInfo {
                step: now,
                action,
                input,
                outcome,
                overflow,
                truncated,
            },
        })
    }
}
