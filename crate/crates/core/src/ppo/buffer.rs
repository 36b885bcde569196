//! On-policy rollout storage and generalized advantage estimation.

use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub obs: Vec<T>,
    pub action: usize,
    pub log_prob: T,
    pub value: T,
    pub reward: T,
    /// Validity mask used when the action was sampled, if masking was on.
    pub mask: Option<Vec<bool>>,
    /// Value estimate of the following state (the bootstrap target).
    pub next_value: T,
    /// The episode ended after this step (terminated or truncated).
    pub episode_end: bool,
    /// The episode reached a true terminal state; truncation keeps the bootstrap.
    pub terminal: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer<T> {
    pub transitions: Vec<Transition<T>>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
}

impl<T: Scalar> RolloutBuffer<T> {
    pub fn with_capacity(n: usize) -> Self {
        RolloutBuffer {
            transitions: Vec::with_capacity(n),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition<T>) {
        self.transitions.push(t);
    }

    pub fn compute_advantages(&mut self, gamma: T, lambda: T) {
        let rewards: Vec<T> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<T> = self.transitions.iter().map(|t| t.value).collect();
        let next: Vec<T> = self.transitions.iter().map(|t| t.next_value).collect();
        let ends: Vec<bool> = self.transitions.iter().map(|t| t.episode_end).collect();
        let terms: Vec<bool> = self.transitions.iter().map(|t| t.terminal).collect();
        let (adv, ret) = compute_gae(&rewards, &values, &next, &ends, &terms, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }
}

/// `A_t = sum_k (gamma*lambda)^k delta_{t+k}` with
/// `delta_t = r_t + gamma * V(s_{t+1}) * (1 - terminal_t) - V(s_t)`; the sum
/// stops at episode boundaries. Returns `(advantages, advantages + values)`.
pub fn compute_gae<T: Scalar>(
    rewards: &[T],
    values: &[T],
    next_values: &[T],
    episode_ends: &[bool],
    terminals: &[bool],
    gamma: T,
    lambda: T,
) -> (Vec<T>, Vec<T>) {
    let n = rewards.len();
    let mut adv = vec![T::ZERO; n];
    let mut running = T::ZERO;
    for t in (0..n).rev() {
        let bootstrap = if terminals[t] { T::ZERO } else { gamma * next_values[t] };
        let delta = rewards[t] + bootstrap - values[t];
        let carry = if episode_ends[t] { T::ZERO } else { gamma * lambda * running };
        running = delta + carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    (adv, returns)
}

/// Shifts to zero mean and unit sample standard deviation.
pub fn normalize<T: Scalar>(xs: &mut [T]) {
    let n = xs.len();
    if n < 2 {
        return;
    }
    let nf = T::of(n as f64);
    let mean = xs.iter().copied().sum::<T>() / nf;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::of((n - 1) as f64);
    let std = var.sqrt() + T::of(1e-8);
    for x in xs.iter_mut() {
        *x = (*x - mean) / std;
    }
}
