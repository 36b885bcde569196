//! Reward signals for the sorting, pressing and monolithic agents.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Scale applied to the mean purity deviation before `tanh`.
    pub alpha: f64,
    /// Weight of the overall fill ratio in the per-step pressing reward.
    pub fill_weight: f64,
    /// Bonus per full bale in a single press.
    pub bale_bonus: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 10.0,
            fill_weight: 0.5,
            bale_bonus: 0.25,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(ConfigError::bound("reward_alpha", "must be finite and > 0"));
        }
        if !(self.fill_weight.is_finite() && self.fill_weight >= 0.0) {
            return Err(ConfigError::bound("reward_fill_weight", "must be finite and >= 0"));
        }
        if !(self.bale_bonus.is_finite() && self.bale_bonus >= 0.0) {
            return Err(ConfigError::bound("reward_bale_bonus", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `tanh(alpha * mean_i(p_i - theta_i))`.
pub fn sorting_reward<T: Scalar>(purities: &[T], thresholds: &[T], alpha: T) -> T {
    debug_assert_eq!(purities.len(), thresholds.len());
    let n = T::of(purities.len() as f64);
    let dev: T = purities.iter().zip(thresholds).map(|(&p, &t)| p - t).sum::<T>() / n;
    (alpha * dev).tanh()
}

/// State component of the pressing reward, paid every step.
pub fn pressing_state_reward<T: Scalar>(fill_ratio: T, fill_weight: T) -> T {
    fill_weight * fill_ratio
}

/// Triangular wave with unit peaks at positive integers and troughs of -1 at
/// half-integers.
pub fn triangular_wave<T: Scalar>(bales: T) -> T {
    let nearest = bales.round().max(T::ONE);
    T::ONE - T::of(4.0) * (bales - nearest).abs()
}

/// Action component of the pressing reward for a press producing `bales`.
pub fn pressing_action_reward<T: Scalar>(bales: T, bale_bonus: T) -> T {
    triangular_wave(bales) + bale_bonus * bales.floor()
}

/// Full pressing reward. `pressed_bales` is `Some(b)` only when a press executed.
pub fn pressing_reward<T: Scalar>(fill_ratio: T, pressed_bales: Option<T>, weights: &RewardWeights) -> T {
    let state = pressing_state_reward(fill_ratio, T::of(weights.fill_weight));
    match pressed_bales {
        Some(b) => state + pressing_action_reward(b, T::of(weights.bale_bonus)),
        None => state,
    }
}

pub fn monolithic_reward<T: Scalar>(sort: T, press: T) -> T {
    sort + press
}
