//! Categorical distribution over logits with optional action masking.

use rand::Rng;

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Softmax over the mask-true logits; mask-false actions carry probability 0
/// and log-probability `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedCategorical<T> {
    log_probs: Vec<T>,
    probs: Vec<T>,
}

impl<T: Scalar> MaskedCategorical<T> {
    pub fn new(logits: &[T], mask: Option<&[bool]>) -> Result<Self> {
        if let Some(m) = mask {
            if m.len() != logits.len() {
                return Err(Error::Contract(format!(
                    "mask length {} does not match {} logits",
                    m.len(),
                    logits.len()
                )));
            }
            if !m.iter().any(|&v| v) {
                return Err(Error::Contract("action mask admits no action".into()));
            }
        }
        let allowed = |i: usize| mask.is_none_or(|m| m[i]);
        let max = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| allowed(i))
            .map(|(_, &l)| l)
            .fold(T::neg_infinity(), T::max);
        let sum: T = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| allowed(i))
            .map(|(_, &l)| (l - max).exp())
            .sum();
        let log_z = max + sum.ln();
        let log_probs: Vec<T> = logits
            .iter()
            .enumerate()
            .map(|(i, &l)| if allowed(i) { l - log_z } else { T::neg_infinity() })
            .collect();
        let probs = log_probs
            .iter()
            .map(|&lp| if lp == T::neg_infinity() { T::ZERO } else { lp.exp() })
            .collect();
        Ok(MaskedCategorical { log_probs, probs })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn log_prob(&self, action: usize) -> T {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> T {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(&p, _)| p > T::ZERO)
            .map(|(&p, &lp)| -p * lp)
            .sum()
    }

    /// Most likely action, lowest index on ties.
    pub fn mode(&self) -> usize {
        crate::num::masked_argmax(&self.log_probs, None).unwrap_or(0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::of(rng.random::<f64>());
        let mut acc = T::ZERO;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= T::ZERO {
                continue;
            }
            acc = acc + p;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// Gradient of `log p(action)` with respect to the logits.
    pub fn grad_log_prob(&self, action: usize) -> Vec<T> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if p <= T::ZERO {
                    T::ZERO
                } else if i == action {
                    T::ONE - p
                } else {
                    -p
                }
            })
            .collect()
    }

    /// Gradient of the entropy with respect to the logits.
    pub fn grad_entropy(&self) -> Vec<T> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(&p, &lp)| if p > T::ZERO { -p * (lp + h) } else { T::ZERO })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_with_two_valid() {
        let mask: Vec<bool> = (0..22).map(|i| i == 0 || i == 11).collect();
        let d = MaskedCategorical::new(&[0.0f64; 22], Some(&mask)).unwrap();
        for (i, &p) in d.probs().iter().enumerate() {
            assert_eq!(p, if mask[i] { 0.5 } else { 0.0 });
        }
        assert_eq!(d.log_prob(1), f64::NEG_INFINITY);
    }

    #[test]
    fn all_true_mask_matches_unmasked() {
        let logits = [0.3f64, -1.2, 2.0, 0.0];
        let a = MaskedCategorical::new(&logits, None).unwrap();
        let b = MaskedCategorical::new(&logits, Some(&[true; 4])).unwrap();
        assert_eq!(a, b);
        let s: f64 = a.probs().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn never_samples_masked_actions() {
        let logits: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let mask: Vec<bool> = (0..11).map(|i| i % 3 == 0).collect();
        let d = MaskedCategorical::new(&logits, Some(&mask)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            assert!(mask[d.sample(&mut rng)]);
        }
    }

    #[test]
    fn empty_mask_is_contract_violation() {
        assert!(MaskedCategorical::new(&[0.0f32; 3], Some(&[false; 3])).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let logits = [0.4f64, -0.3, 1.1, 0.0, -2.0];
        let mask = [true, true, false, true, true];
        let d = MaskedCategorical::new(&logits, Some(&mask)).unwrap();
        let g_lp = d.grad_log_prob(3);
        let g_h = d.grad_entropy();
        let h = 1e-6;
        for i in 0..5 {
            let mut up = logits;
            let mut dn = logits;
            up[i] += h;
            dn[i] -= h;
            let du = MaskedCategorical::new(&up, Some(&mask)).unwrap();
            let dd = MaskedCategorical::new(&dn, Some(&mask)).unwrap();
            let fd_lp = (du.log_prob(3) - dd.log_prob(3)) / (2.0 * h);
            let fd_h = (du.entropy() - dd.entropy()) / (2.0 * h);
            assert!((fd_lp - g_lp[i]).abs() < 1e-8, "logp {i}");
            assert!((fd_h - g_h[i]).abs() < 1e-8, "entropy {i}");
        }
    }

    #[test]
    fn mode_skips_masked() {
        let d = MaskedCategorical::new(&[5.0f32, 1.0, 2.0], Some(&[false, true, true])).unwrap();
        assert_eq!(d.mode(), 2);
    }
}
