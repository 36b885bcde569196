//! Plant configuration. Every constant the simulator uses lives here so it can
//! be overridden from a config file.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::material::N_MATERIALS;
use crate::rewards::RewardWeights;

pub const N_CONTAINERS: usize = 5;
pub const N_PRESSES: usize = 2;
pub const N_MODES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub n_materials: usize,
    pub n_containers: usize,
    pub n_presses: usize,
    /// Number of belt slots between the input and the sorting machine.
    pub belt_delay_steps: usize,
    pub belt_capacity: f64,
    pub container_capacity: f64,
    pub bale_size: f64,
    pub purity_thresholds: [f64; N_CONTAINERS],
    /// `accuracy_table[mode][group]`.
    pub accuracy_table: [[f64; 2]; N_MODES],
    pub accuracy_noise_sigma: f64,
    pub input_volume_range: [f64; 2],
    /// Press duration is `ceil(press_time_base + press_time_per_bale * bales)`.
    pub press_time_base: f64,
    pub press_time_per_bale: f64,
    pub episode_length: usize,
    pub reward_alpha: f64,
    pub reward_fill_weight: f64,
    pub reward_bale_bonus: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let weights = RewardWeights::default();
        EnvConfig {
            n_materials: N_MATERIALS,
            n_containers: N_CONTAINERS,
            n_presses: N_PRESSES,
            belt_delay_steps: 3,
            belt_capacity: 30.0,
            container_capacity: 40.0,
            bale_size: 10.0,
            purity_thresholds: [0.85; N_CONTAINERS],
            accuracy_table: [[0.90, 0.70], [0.70, 0.90]],
            accuracy_noise_sigma: 0.02,
            input_volume_range: [2.0, 6.0],
            press_time_base: 5.0,
            press_time_per_bale: 5.0,
            episode_length: 200,
            reward_alpha: weights.alpha,
            reward_fill_weight: weights.fill_weight,
            reward_bale_bonus: weights.bale_bonus,
        }
    }
}

fn positive_finite(field: &'static str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::bound(field, format!("must be finite and > 0 (got {x})")))
    }
}

fn nonnegative_finite(field: &'static str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::bound(field, format!("must be finite and >= 0 (got {x})")))
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fixed = [
            ("n_materials", self.n_materials, N_MATERIALS),
            ("n_containers", self.n_containers, N_CONTAINERS),
            ("n_presses", self.n_presses, N_PRESSES),
        ];
        for (field, got, want) in fixed {
            if got != want {
                return Err(ConfigError::bound(field, format!("must equal {want} (got {got})")));
            }
        }
        if self.belt_delay_steps == 0 {
            return Err(ConfigError::bound("belt_delay_steps", "must be >= 1"));
        }
        positive_finite("belt_capacity", self.belt_capacity)?;
        positive_finite("container_capacity", self.container_capacity)?;
        positive_finite("bale_size", self.bale_size)?;
        if self.bale_size > self.container_capacity {
            return Err(ConfigError::bound(
                "bale_size",
                format!(
                    "must be <= container_capacity ({} > {})",
                    self.bale_size, self.container_capacity
                ),
            ));
        }
        for &theta in &self.purity_thresholds {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(ConfigError::bound(
                    "purity_thresholds",
                    format!("entries must lie in (0, 1) (got {theta})"),
                ));
            }
        }
        for &a in self.accuracy_table.iter().flatten() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ConfigError::bound(
                    "accuracy_table",
                    format!("entries must lie in (0, 1] (got {a})"),
                ));
            }
        }
        nonnegative_finite("accuracy_noise_sigma", self.accuracy_noise_sigma)?;
        let [lo, hi] = self.input_volume_range;
        nonnegative_finite("input_volume_range", lo)?;
        nonnegative_finite("input_volume_range", hi)?;
        if lo > hi {
            return Err(ConfigError::bound(
                "input_volume_range",
                format!("lower bound exceeds upper bound ({lo} > {hi})"),
            ));
        }
        nonnegative_finite("press_time_base", self.press_time_base)?;
        nonnegative_finite("press_time_per_bale", self.press_time_per_bale)?;
        if self.episode_length == 0 {
            return Err(ConfigError::bound("episode_length", "must be > 0"));
        }
        self.reward_weights().validate()
    }

    pub fn reward_weights(&self) -> RewardWeights {
        RewardWeights {
            alpha: self.reward_alpha,
            fill_weight: self.reward_fill_weight,
            bale_bonus: self.reward_bale_bonus,
        }
    }

    /// Longest press duration a single (full-container) press can take.
    pub fn max_press_duration(&self) -> f64 {
        self.press_time_base + self.press_time_per_bale * self.container_capacity / self.bale_size
    }
}
