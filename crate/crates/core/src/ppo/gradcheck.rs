//! Central finite-difference check of the analytic PPO loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::distribution::MaskedCategorical;
use super::nn::MlpPolicy;
use super::update::{ppo_loss, LossCoefficients, Sample};
use crate::error::Result;

/// An owned minibatch of random samples.
#[derive(Debug, Clone)]
pub struct ToyBatch {
    pub obs: Vec<Vec<f64>>,
    pub masks: Vec<Option<Vec<bool>>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl ToyBatch {
    /// Random observations and targets for `net`. Old log-probabilities are
    /// offset from the current ones so that some ratios fall outside the clip
    /// range, but never within `1e-3` of its edges (the loss has kinks there).
    pub fn random(net: &MlpPolicy<f64>, n: usize, masked: bool, clip_range: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = net.n_actions();
        let mut b = ToyBatch {
            obs: Vec::new(),
            masks: Vec::new(),
            actions: Vec::new(),
            old_log_probs: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        while b.obs.len() < n {
            let obs: Vec<f64> = (0..net.obs_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mask = masked.then(|| {
                let mut m: Vec<bool> = (0..k).map(|_| rng.random_bool(0.6)).collect();
                m[rng.random_range(0..k)] = true;
                m
            });
            let (logits, _) = net.forward(&obs)?;
            let dist = MaskedCategorical::new(&logits, mask.as_deref())?;
            let action = dist.sample(&mut rng);
            let shift: f64 = rng.random_range(-0.5..0.5);
            let ratio = shift.exp();
            if (ratio - (1.0 - clip_range)).abs() < 1e-3 || (ratio - (1.0 + clip_range)).abs() < 1e-3 {
                continue;
            }
            b.old_log_probs.push(dist.log_prob(action) - shift);
            b.actions.push(action);
            b.obs.push(obs);
            b.masks.push(mask);
            b.advantages.push(rng.sample(StandardNormal));
            b.returns.push(rng.sample(StandardNormal));
        }
        Ok(b)
    }

    pub fn samples(&self) -> Vec<Sample<'_, f64>> {
        (0..self.obs.len())
            .map(|i| Sample {
                obs: &self.obs[i],
                action: self.actions[i],
                old_log_prob: self.old_log_probs[i],
                advantage: self.advantages[i],
                ret: self.returns[i],
                mask: self.masks[i].as_deref(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub n_params: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient with central differences of step `h`.
pub fn check_gradients(
    net: &MlpPolicy<f64>,
    samples: &[Sample<'_, f64>],
    coef: &LossCoefficients<f64>,
    h: f64,
) -> Result<GradCheck> {
    let mut analytic = vec![0.0; net.param_count()];
    ppo_loss(net, samples, coef, Some(&mut analytic))?;
    let mut probe = net.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_param: 0,
        n_params: analytic.len(),
    };
    for (i, &a) in analytic.iter().enumerate() {
        let p0 = probe.params()[i];
        probe.params_mut()[i] = p0 + h;
        let up = ppo_loss(&probe, samples, coef, None)?.total;
        probe.params_mut()[i] = p0 - h;
        let down = ppo_loss(&probe, samples, coef, None)?.total;
        probe.params_mut()[i] = p0;
        let err = relative_error(a, (up - down) / (2.0 * h), 1e-6);
        if err > out.max_rel_error {
            out.max_rel_error = err;
            out.worst_param = i;
        }
    }
    Ok(out)
}
