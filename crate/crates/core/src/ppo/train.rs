//! Rollout collection and the three training pipelines: the sorting agent
//! with a rule-based presser, the pressing agent behind a frozen sorter, and
//! the monolithic agent on the summed reward.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::buffer::{RolloutBuffer, Transition};
use super::checkpoint::Checkpoint;
use super::distribution::MaskedCategorical;
use super::nn::{MlpPolicy, DEFAULT_HIDDEN};
use super::update::{ppo_update, LossCoefficients, UpdateSettings};
use crate::config::EnvConfig;
use crate::error::{ConfigError, Error, Result};
use crate::num::{masked_argmax, Scalar};
use crate::policies::rule_based_pressing;
use crate::sim::{EnvState, StepOutputs};
use crate::spaces::{self, Action, AgentKind, SortingMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_timesteps: usize,
    pub rollout_horizon: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub learning_rate: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub masked: bool,
    pub hidden_sizes: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_timesteps: 100_000,
            rollout_horizon: 2048,
            minibatch_size: 64,
            epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            learning_rate: 3e-4,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            seed: 42,
            masked: false,
            hidden_sizes: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |field: &'static str, x: f64| {
            if x > 0.0 && x <= 1.0 {
                Ok(())
            } else {
                Err(ConfigError::bound(field, format!("must lie in (0, 1] (got {x})")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        if self.clip_range.is_nan() || self.clip_range <= 0.0 {
            return Err(ConfigError::bound("clip_range", "must be > 0"));
        }
        if self.rollout_horizon == 0 {
            return Err(ConfigError::bound("rollout_horizon", "must be > 0"));
        }
        if self.total_timesteps < self.rollout_horizon {
            return Err(ConfigError::bound(
                "total_timesteps",
                format!("must be >= rollout_horizon ({})", self.rollout_horizon),
            ));
        }
        if self.minibatch_size == 0 || self.epochs == 0 {
            return Err(ConfigError::bound("minibatch_size", "minibatch_size and epochs must be > 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::bound("learning_rate", "must be finite and > 0"));
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return Err(ConfigError::bound("max_grad_norm", "must be > 0"));
        }
        if self.ent_coef < 0.0 || self.vf_coef < 0.0 {
            return Err(ConfigError::bound("ent_coef", "ent_coef and vf_coef must be >= 0"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(ConfigError::bound("hidden_sizes", "needs at least one nonzero layer"));
        }
        Ok(())
    }

    /// Number of rollout/update cycles; the last rollout may overshoot
    /// `total_timesteps` by less than one horizon.
    pub fn n_updates(&self) -> usize {
        self.total_timesteps.div_ceil(self.rollout_horizon)
    }

    fn update_settings<T: Scalar>(&self) -> UpdateSettings<T> {
        UpdateSettings {
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            learning_rate: T::of(self.learning_rate),
            max_grad_norm: T::of(self.max_grad_norm),
            coef: LossCoefficients {
                clip_range: T::of(self.clip_range),
                value_coef: T::of(self.vf_coef),
                entropy_coef: T::of(self.ent_coef),
            },
        }
    }
}

/// Greedy action of a network, restricted to `mask` when given.
pub fn greedy_action<T: Scalar>(net: &MlpPolicy<T>, obs: &[f64], mask: Option<&[bool]>) -> Result<usize> {
    let obs: Vec<T> = obs.iter().map(|&x| T::of(x)).collect();
    let (logits, _) = net.forward(&obs)?;
    masked_argmax(&logits, mask).ok_or_else(|| Error::Contract("action mask admits no action".into()))
}

/// Controller for the sub-task that is not being learned.
#[derive(Debug, Clone)]
pub enum Partner {
    /// Rule-based presser for sorting-agent training.
    RulePressing { min_fill: f64 },
    /// Greedy frozen sorter for pressing-agent training.
    FrozenSorter(MlpPolicy<f32>),
    None,
}

/// A single-agent view of the plant for one [`AgentKind`].
#[derive(Debug, Clone)]
pub struct TaskEnv {
    kind: AgentKind,
    partner: Partner,
    config: EnvConfig,
    seeds: ChaCha8Rng,
    state: EnvState,
    episode_return: f64,
    pub completed_returns: Vec<f64>,
    pub ignored_actions: usize,
}

impl TaskEnv {
    pub fn new(kind: AgentKind, config: EnvConfig, partner: Partner, seed: u64) -> Result<Self> {
        match (&partner, kind) {
            (Partner::RulePressing { .. }, AgentKind::Sorting)
            | (Partner::FrozenSorter(_), AgentKind::Pressing)
            | (Partner::None, AgentKind::Monolithic) => {}
            _ => {
                return Err(Error::Contract(format!("partner does not fit a {kind} agent")));
            }
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        seeds.set_stream(3);
        let first = seeds.next_u64();
        Ok(TaskEnv {
            kind,
            partner,
            state: EnvState::reset(config.clone(), first)?,
            config,
            seeds,
            episode_return: 0.0,
            completed_returns: Vec::new(),
            ignored_actions: 0,
        })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn observation(&self) -> Vec<f64> {
        spaces::observation(self.kind, &self.state)
    }

    pub fn mask(&self) -> Vec<bool> {
        spaces::action_mask(self.kind, &self.state)
    }

    fn compose(&self, index: usize) -> Result<Action> {
        Ok(match self.kind {
            AgentKind::Monolithic => spaces::decode_monolithic_action(index)?,
            AgentKind::Sorting => {
                let min_fill = match self.partner {
                    Partner::RulePressing { min_fill } => min_fill,
                    _ => unreachable!(),
                };
                Action {
                    mode: SortingMode::from_index(index)?,
                    press: rule_based_pressing(&self.state, min_fill),
                }
            }
            AgentKind::Pressing => {
                let Partner::FrozenSorter(net) = &self.partner else { unreachable!() };
                let obs = spaces::sorting_observation(&self.state);
                Action {
                    mode: SortingMode::from_index(greedy_action(net, &obs, None)?)?,
                    press: spaces::decode_pressing_action(index)?,
                }
            }
        })
    }

    fn reward_of(&self, out: &StepOutputs) -> f64 {
        match self.kind {
            AgentKind::Sorting => out.rewards.sort,
            AgentKind::Pressing => out.rewards.press,
            AgentKind::Monolithic => out.rewards.total,
        }
    }

    /// Applies the agent's action. Returns the reward, whether the episode
    /// ended, and the final observation of an ended episode (the env has
    /// already been reset in that case).
    pub fn step(&mut self, index: usize) -> Result<(f64, bool, Option<Vec<f64>>)> {
        let action = self.compose(index)?;
        let out = self.state.step(action)?;
        if out.info.outcome.is_ignored() {
            self.ignored_actions += 1;
        }
        let reward = self.reward_of(&out);
        self.episode_return += reward;
        if out.info.truncated {
            let final_obs = self.observation();
            self.completed_returns.push(self.episode_return);
            self.episode_return = 0.0;
            let seed = self.seeds.next_u64();
            self.state = EnvState::reset(self.config.clone(), seed)?;
            Ok((reward, true, Some(final_obs)))
        } else {
            Ok((reward, false, None))
        }
    }
}

fn to_scalar<T: Scalar>(obs: &[f64]) -> Vec<T> {
    obs.iter().map(|&x| T::of(x)).collect()
}

/// Gathers `horizon` transitions with the current policy and computes GAE.
pub fn collect_rollout<T: Scalar>(
    env: &mut TaskEnv,
    net: &MlpPolicy<T>,
    horizon: usize,
    masked: bool,
    gamma: T,
    lambda: T,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBuffer<T>> {
    let mut buf = RolloutBuffer::with_capacity(horizon);
    for _ in 0..horizon {
        let obs = to_scalar::<T>(&env.observation());
        let mask = masked.then(|| env.mask());
        let (logits, value) = net.forward(&obs)?;
        let dist = MaskedCategorical::new(&logits, mask.as_deref())?;
        let action = dist.sample(rng);
        let log_prob = dist.log_prob(action);
        if !log_prob.is_finite() || !value.is_finite() {
            return Err(Error::NonFinite {
                what: "policy output during rollout".into(),
                update: 0,
            });
        }
        let (reward, ended, final_obs) = env.step(action)?;
        if let Some(prev) = buf.transitions.last_mut() {
            if !prev.episode_end {
                prev.next_value = value;
            }
        }
        let next_value = match final_obs {
            Some(o) => net.value(&to_scalar::<T>(&o))?,
            None => T::ZERO,
        };
        buf.push(Transition {
            obs,
            action,
            log_prob,
            value,
            reward: T::of(reward),
            mask,
            next_value,
            episode_end: ended,
            terminal: false,
        });
    }
    if let Some(last) = buf.transitions.last_mut() {
        if !last.episode_end {
            last.next_value = net.value(&to_scalar::<T>(&env.observation()))?;
        }
    }
    buf.compute_advantages(gamma, lambda);
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub timesteps: usize,
    pub mean_episode_reward: f64,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub ignored_actions: usize,
}

/// A trained network with its training curve.
#[derive(Debug, Clone)]
pub struct PolicyArtifact {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurveRow>,
}

impl PolicyArtifact {
    pub fn ignored_actions(&self) -> usize {
        self.curve.iter().map(|r| r.ignored_actions).sum()
    }

    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        write_curve_csv(&self.curve, path)
    }
}

pub fn write_curve_csv(curve: &[CurveRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    for row in curve {
        w.serialize(row).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Generic PPO loop over one [`TaskEnv`].
pub fn train_agent(
    kind: AgentKind,
    env_config: &EnvConfig,
    cfg: &TrainConfig,
    partner: Partner,
    mut on_update: impl FnMut(&CurveRow),
) -> Result<PolicyArtifact> {
    cfg.validate()?;
    env_config.validate()?;
    let spec = kind.spec();
    let stream = |n: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(n);
        r
    };
    let (mut init_rng, mut sample_rng, mut shuffle_rng) = (stream(0), stream(1), stream(2));
    let mut net = MlpPolicy::<f32>::new(spec.obs_len, spec.n_actions, &cfg.hidden_sizes, &mut init_rng);
    let settings = cfg.update_settings::<f32>();
    let mut opt = Adam::new(net.param_count(), settings.learning_rate);
    let mut env = TaskEnv::new(kind, env_config.clone(), partner, cfg.seed)?;
    let (gamma, lambda) = (cfg.gamma as f32, cfg.gae_lambda as f32);

    let mut curve = Vec::with_capacity(cfg.n_updates());
    let mut timesteps = 0;
    for update in 0..cfg.n_updates() {
        env.completed_returns.clear();
        let ignored_before = env.ignored_actions;
        let buffer = collect_rollout(&mut env, &net, cfg.rollout_horizon, cfg.masked, gamma, lambda, &mut sample_rng)?;
        timesteps += buffer.len();
        if buffer.advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                what: "advantages".into(),
                update,
            });
        }
        let stats = ppo_update(&mut net, &mut opt, &buffer, &settings, &mut shuffle_rng, update)?;
        let episodes = env.completed_returns.len();
        let row = CurveRow {
            update,
            timesteps,
            mean_episode_reward: if episodes > 0 {
                env.completed_returns.iter().sum::<f64>() / episodes as f64
            } else {
                f64::NAN
            },
            episodes,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            ignored_actions: env.ignored_actions - ignored_before,
        };
        on_update(&row);
        curve.push(row);
    }
    Ok(PolicyArtifact {
        checkpoint: Checkpoint {
            kind,
            masked: cfg.masked,
            seed: cfg.seed,
            net,
        },
        curve,
    })
}

/// Sorting agent trained with the rule-based presser handling the presses.
pub fn train_sorting(env_config: &EnvConfig, cfg: &TrainConfig, min_fill: f64) -> Result<PolicyArtifact> {
    train_agent(AgentKind::Sorting, env_config, cfg, Partner::RulePressing { min_fill }, |_| {})
}

/// Pressing agent trained behind the greedy actions of a frozen sorter.
pub fn train_pressing(env_config: &EnvConfig, cfg: &TrainConfig, frozen_sorting: &Checkpoint) -> Result<PolicyArtifact> {
    if frozen_sorting.kind != AgentKind::Sorting {
        return Err(ConfigError::SpecMismatch {
            expected: AgentKind::Sorting.name(),
            found: frozen_sorting.kind.name(),
        }
        .into());
    }
    train_agent(
        AgentKind::Pressing,
        env_config,
        cfg,
        Partner::FrozenSorter(frozen_sorting.net.clone()),
        |_| {},
    )
}

pub fn train_monolithic(env_config: &EnvConfig, cfg: &TrainConfig) -> Result<PolicyArtifact> {
    train_agent(AgentKind::Monolithic, env_config, cfg, Partner::None, |_| {})
}
