//! Clipped-surrogate PPO objective, its gradient, and the epoch/minibatch loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::buffer::{normalize, RolloutBuffer};
use super::distribution::MaskedCategorical;
use super::nn::MlpPolicy;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Loss coefficients for one gradient evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossCoefficients<T> {
    pub clip_range: T,
    pub value_coef: T,
    pub entropy_coef: T,
}

/// One training sample as seen by the loss.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, T> {
    pub obs: &'a [T],
    pub action: usize,
    pub old_log_prob: T,
    pub advantage: T,
    pub ret: T,
    pub mask: Option<&'a [bool]>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    /// `policy_loss + value_coef * value_loss - entropy_coef * entropy`.
    pub total: T,
    /// Negated mean clipped surrogate.
    pub policy_loss: T,
    /// Mean squared error of the value head.
    pub value_loss: T,
    pub entropy: T,
    pub approx_kl: T,
    pub clip_fraction: T,
}

/// Evaluates the PPO loss on `samples` and, when `grad` is given, adds its
/// gradient with respect to the network parameters.
pub fn ppo_loss<T: Scalar>(
    net: &MlpPolicy<T>,
    samples: &[Sample<'_, T>],
    coef: &LossCoefficients<T>,
    mut grad: Option<&mut [T]>,
) -> Result<LossBreakdown<T>> {
    let n = T::of(samples.len() as f64);
    let lo = T::ONE - coef.clip_range;
    let hi = T::ONE + coef.clip_range;
    let mut out = LossBreakdown::default();
    for s in samples {
        let cache = net.forward_cached(s.obs)?;
        let dist = MaskedCategorical::new(&cache.logits, s.mask)?;
        let log_prob = dist.log_prob(s.action);
        let log_ratio = log_prob - s.old_log_prob;
        let ratio = log_ratio.exp();
        let unclipped = ratio * s.advantage;
        let clipped = ratio.max(lo).min(hi) * s.advantage;
        let surrogate = unclipped.min(clipped);
        let entropy = dist.entropy();
        let v_err = cache.value - s.ret;

        out.policy_loss = out.policy_loss - surrogate / n;
        out.value_loss = out.value_loss + v_err * v_err / n;
        out.entropy = out.entropy + entropy / n;
        out.approx_kl = out.approx_kl + ((ratio - T::ONE) - log_ratio) / n;
        if (ratio - T::ONE).abs() > coef.clip_range {
            out.clip_fraction = out.clip_fraction + T::ONE / n;
        }

        if let Some(g) = grad.as_deref_mut() {
            // The min picks the unclipped branch unless clipping binds.
            let d_logp = if unclipped <= clipped { -unclipped / n } else { T::ZERO };
            let mut dlogits = vec![T::ZERO; cache.logits.len()];
            if d_logp != T::ZERO {
                for (d, gl) in dlogits.iter_mut().zip(dist.grad_log_prob(s.action)) {
                    *d = *d + d_logp * gl;
                }
            }
            if coef.entropy_coef != T::ZERO {
                let k = -coef.entropy_coef / n;
                for (d, gh) in dlogits.iter_mut().zip(dist.grad_entropy()) {
                    *d = *d + k * gh;
                }
            }
            let dvalue = coef.value_coef * T::TWO * v_err / n;
            net.backward(&cache, &dlogits, dvalue, g);
        }
    }
    out.total = out.policy_loss + coef.value_coef * out.value_loss - coef.entropy_coef * out.entropy;
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateSettings<T> {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: T,
    pub max_grad_norm: T,
    pub coef: LossCoefficients<T>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Runs the epochs of minibatch updates over a filled buffer whose
/// advantages have been computed. Advantages are standardized over the whole
/// buffer first.
pub fn ppo_update<T: Scalar, R: Rng + ?Sized>(
    net: &mut MlpPolicy<T>,
    opt: &mut Adam<T>,
    buffer: &RolloutBuffer<T>,
    settings: &UpdateSettings<T>,
    rng: &mut R,
    update_index: usize,
) -> Result<UpdateStats> {
    let n = buffer.len();
    if n == 0 || buffer.advantages.len() != n {
        return Err(Error::Contract("buffer has no computed advantages".into()));
    }
    let mut advantages = buffer.advantages.clone();
    normalize(&mut advantages);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![T::ZERO; net.param_count()];
    let mut sums = UpdateStats::default();
    let mut batches = 0usize;
    opt.lr = settings.learning_rate;

    for _ in 0..settings.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(settings.minibatch_size.max(1)) {
            let samples: Vec<Sample<'_, T>> = chunk
                .iter()
                .map(|&i| {
                    let t = &buffer.transitions[i];
                    Sample {
                        obs: &t.obs,
                        action: t.action,
                        old_log_prob: t.log_prob,
                        advantage: advantages[i],
                        ret: buffer.returns[i],
                        mask: t.mask.as_deref(),
                    }
                })
                .collect();
            grad.fill(T::ZERO);
            let loss = ppo_loss(net, &samples, &settings.coef, Some(&mut grad))?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite {
                    what: format!(
                        "loss (policy {}, value {}, entropy {})",
                        loss.policy_loss, loss.value_loss, loss.entropy
                    ),
                    update: update_index,
                });
            }
            let norm = clip_grad_norm(&mut grad, settings.max_grad_norm);
            if !norm.is_finite() {
                return Err(Error::NonFinite {
                    what: "gradient".into(),
                    update: update_index,
                });
            }
            opt.step(net.params_mut(), &grad);
            sums.policy_loss += loss.policy_loss.to_f64_lossy();
            sums.value_loss += loss.value_loss.to_f64_lossy();
            sums.entropy += loss.entropy.to_f64_lossy();
            sums.approx_kl += loss.approx_kl.to_f64_lossy();
            sums.clip_fraction += loss.clip_fraction.to_f64_lossy();
            sums.grad_norm += norm.to_f64_lossy();
            batches += 1;
        }
    }
    if net.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            what: "parameters".into(),
            update: update_index,
        });
    }
    let k = 1.0 / batches.max(1) as f64;
    Ok(UpdateStats {
        policy_loss: sums.policy_loss * k,
        value_loss: sums.value_loss * k,
        entropy: sums.entropy * k,
        approx_kl: sums.approx_kl * k,
        clip_fraction: sums.clip_fraction * k,
        grad_norm: sums.grad_norm * k,
    })
}
