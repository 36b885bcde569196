//! Actor-critic MLP with tanh hidden layers and hand-written backpropagation.
//!
//! All parameters of both networks live in one flat vector: actor layers
//! first, then critic layers. Each dense layer stores its weights row-major
//! (`[out][in]`) followed by its biases.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::num::Scalar;

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];

fn layer_params(n_in: usize, n_out: usize) -> usize {
    n_in * n_out + n_out
}

fn net_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| layer_params(w[0], w[1])).sum()
}

/// Runs a dense tanh network. `acts` receives the input followed by every
/// hidden activation; the linear output is returned.
fn dense_forward<T: Scalar>(params: &[T], sizes: &[usize], x: &[T], acts: &mut Vec<Vec<T>>) -> Vec<T> {
    acts.clear();
    acts.push(x.to_vec());
    let n_layers = sizes.len() - 1;
    let mut off = 0;
    for l in 0..n_layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + layer_params(n_in, n_out)];
        off += layer_params(n_in, n_out);
        let input = acts.last().unwrap();
        let mut out: Vec<T> = (0..n_out)
            .map(|j| {
                let row = &w[j * n_in..(j + 1) * n_in];
                row.iter().zip(input).fold(b[j], |acc, (&wi, &xi)| acc + wi * xi)
            })
            .collect();
        if l + 1 < n_layers {
            for v in out.iter_mut() {
                *v = v.tanh();
            }
            acts.push(out);
        } else {
            return out;
        }
    }
    unreachable!("network has at least one layer")
}

/// Accumulates parameter gradients for `dout = dL/d(output)` into `grad`.
fn dense_backward<T: Scalar>(params: &[T], sizes: &[usize], acts: &[Vec<T>], dout: &[T], grad: &mut [T]) {
    let n_layers = sizes.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in 0..n_layers {
        offsets.push(off);
        off += layer_params(sizes[l], sizes[l + 1]);
    }
    let mut delta = dout.to_vec();
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let off = offsets[l];
        let input = &acts[l];
        let (gw, gb) = grad[off..off + layer_params(n_in, n_out)].split_at_mut(n_in * n_out);
        for j in 0..n_out {
            let d = delta[j];
            if d == T::ZERO {
                continue;
            }
            gb[j] = gb[j] + d;
            for (g, &x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                *g = *g + d * x;
            }
        }
        if l == 0 {
            break;
        }
        let w = &params[off..off + n_in * n_out];
        let mut prev = vec![T::ZERO; n_in];
        for j in 0..n_out {
            let d = delta[j];
            if d == T::ZERO {
                continue;
            }
            for (p, &wi) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                *p = *p + d * wi;
            }
        }
        for (p, &a) in prev.iter_mut().zip(input) {
            *p = *p * (T::ONE - a * a);
        }
        delta = prev;
    }
}

/// Fills `w` (`rows x cols`, row-major) with a scaled orthogonal matrix.
fn orthogonal_init<T: Scalar, R: Rng + ?Sized>(w: &mut [T], rows: usize, cols: usize, gain: f64, rng: &mut R) {
    // Orthonormalize along the shorter dimension with modified Gram-Schmidt.
    let (n_vec, dim, transpose) = if rows <= cols { (rows, cols, false) } else { (cols, rows, true) };
    let mut vecs: Vec<Vec<f64>> = (0..n_vec)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..n_vec {
        for j in 0..i {
            let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = vecs.split_at_mut(i);
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= dot * b;
            }
        }
        let norm = vecs[i].iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        for a in vecs[i].iter_mut() {
            *a /= norm;
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            let v = if transpose { vecs[c][r] } else { vecs[r][c] };
            w[r * cols + c] = T::of(gain * v);
        }
    }
}

/// Forward-pass intermediates needed for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub actor_acts: Vec<Vec<T>>,
    pub critic_acts: Vec<Vec<T>>,
    pub logits: Vec<T>,
    pub value: T,
}

/// Separate policy and value networks of identical hidden shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy<T> {
    obs_len: usize,
    n_actions: usize,
    hidden: Vec<usize>,
    params: Vec<T>,
}

impl<T: Scalar> MlpPolicy<T> {
    /// Orthogonal initialization: gain sqrt(2) on hidden layers, 0.01 on the
    /// policy head and 1 on the value head; zero biases.
    pub fn new<R: Rng + ?Sized>(obs_len: usize, n_actions: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(obs_len, n_actions, hidden);
        let hidden_gain = std::f64::consts::SQRT_2;
        for (sizes, head_gain, base) in [
            (net.actor_sizes(), 0.01, 0),
            (net.critic_sizes(), 1.0, net.actor_param_count()),
        ] {
            let mut off = base;
            for l in 0..sizes.len() - 1 {
                let (n_in, n_out) = (sizes[l], sizes[l + 1]);
                let gain = if l + 2 == sizes.len() { head_gain } else { hidden_gain };
                orthogonal_init(&mut net.params[off..off + n_in * n_out], n_out, n_in, gain, rng);
                off += layer_params(n_in, n_out);
            }
        }
        net
    }

    pub fn zeros(obs_len: usize, n_actions: usize, hidden: &[usize]) -> Self {
        let mut net = MlpPolicy {
            obs_len,
            n_actions,
            hidden: hidden.to_vec(),
            params: Vec::new(),
        };
        net.params = vec![T::ZERO; net.param_count()];
        net
    }

    pub fn from_params(obs_len: usize, n_actions: usize, hidden: &[usize], params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(obs_len, n_actions, hidden);
        if params.len() != net.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn actor_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_len];
        s.extend(&self.hidden);
        s.push(self.n_actions);
        s
    }

    fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_len];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    fn actor_param_count(&self) -> usize {
        net_params(&self.actor_sizes())
    }

    /// Depends only on `(obs_len, n_actions, hidden)`.
    pub fn param_count(&self) -> usize {
        self.actor_param_count() + net_params(&self.critic_sizes())
    }

    /// Zeroes the policy head so every observation yields uniform logits.
    pub fn zero_policy_head(&mut self) {
        let sizes = self.actor_sizes();
        let last = layer_params(sizes[sizes.len() - 2], self.n_actions);
        let end = self.actor_param_count();
        self.params[end - last..end].fill(T::ZERO);
    }

    fn check_obs(&self, obs: &[T]) -> Result<()> {
        if obs.len() != self.obs_len {
            return Err(Error::Contract(format!(
                "observation length {} does not match network input {}",
                obs.len(),
                self.obs_len
            )));
        }
        Ok(())
    }

    pub fn forward(&self, obs: &[T]) -> Result<(Vec<T>, T)> {
        let cache = self.forward_cached(obs)?;
        Ok((cache.logits, cache.value))
    }

    pub fn forward_cached(&self, obs: &[T]) -> Result<ForwardCache<T>> {
        self.check_obs(obs)?;
        let na = self.actor_param_count();
        let mut actor_acts = Vec::new();
        let mut critic_acts = Vec::new();
        let logits = dense_forward(&self.params[..na], &self.actor_sizes(), obs, &mut actor_acts);
        let value = dense_forward(&self.params[na..], &self.critic_sizes(), obs, &mut critic_acts)[0];
        Ok(ForwardCache {
            actor_acts,
            critic_acts,
            logits,
            value,
        })
    }

    pub fn value(&self, obs: &[T]) -> Result<T> {
        self.check_obs(obs)?;
        let na = self.actor_param_count();
        let mut acts = Vec::new();
        Ok(dense_forward(&self.params[na..], &self.critic_sizes(), obs, &mut acts)[0])
    }

    /// Adds `d loss / d params` to `grad` given the loss gradients w.r.t. the
    /// logits and the value.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &[T], dvalue: T, grad: &mut [T]) {
        let na = self.actor_param_count();
        let (ga, gc) = grad.split_at_mut(na);
        dense_backward(&self.params[..na], &self.actor_sizes(), &cache.actor_acts, dlogits, ga);
        if dvalue != T::ZERO {
            dense_backward(&self.params[na..], &self.critic_sizes(), &cache.critic_acts, &[dvalue], gc);
        }
    }

    /// Lossless widening/narrowing of the parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MlpPolicy<U> {
        MlpPolicy {
            obs_len: self.obs_len,
            n_actions: self.n_actions,
            hidden: self.hidden.clone(),
            params: self.params.iter().map(|&p| U::of(p.to_f64_lossy())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(obs: usize, act: usize) -> MlpPolicy<f64> {
        MlpPolicy::new(obs, act, &DEFAULT_HIDDEN, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn parameter_count_formula() {
        // actor: 13*32+32 + 32*32+32 + 32*2+2; critic: same trunk + 32+1
        let n = net(13, 2).param_count();
        assert_eq!(n, (448 + 1056 + 66) + (448 + 1056 + 33));
        assert_eq!(net(29, 22).param_count(), MlpPolicy::<f32>::zeros(29, 22, &DEFAULT_HIDDEN).param_count());
    }

    #[test]
    fn zero_head_gives_uniform_logits() {
        let mut n = net(16, 11);
        n.zero_policy_head();
        let obs: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let (logits, value) = n.forward(&obs).unwrap();
        assert!(logits.iter().all(|&l| l == 0.0));
        assert!(value.is_finite());
    }

    #[test]
    fn forward_is_pure() {
        let n = net(29, 22);
        let obs = vec![0.3; 29];
        assert_eq!(n.forward(&obs).unwrap(), n.forward(&obs).unwrap());
    }

    #[test]
    fn wrong_obs_length_is_rejected() {
        assert!(matches!(net(13, 2).forward(&[0.0; 12]), Err(Error::Contract(_))));
    }

    #[test]
    fn perturbation_changes_outputs_linearly() {
        let n = net(13, 2);
        let obs: Vec<f64> = (0..13).map(|i| i as f64 / 13.0 - 0.5).collect();
        let (l0, v0) = n.forward(&obs).unwrap();
        for &idx in &[0usize, 500, 1500, 1600, 3000] {
            let mut diffs = Vec::new();
            for delta in [1e-3, 1e-4] {
                let mut m = n.clone();
                m.params_mut()[idx] += delta;
                let (l1, v1) = m.forward(&obs).unwrap();
                let d = l1
                    .iter()
                    .zip(&l0)
                    .map(|(a, b)| (a - b).abs())
                    .chain([(v1 - v0).abs()])
                    .fold(0.0, f64::max);
                diffs.push(d);
            }
            // Output change shrinks proportionally with the perturbation.
            if diffs[0] > 1e-12 {
                let ratio = diffs[0] / diffs[1];
                assert!((ratio - 10.0).abs() < 0.1, "param {idx}: ratio {ratio}");
            }
            assert!(diffs[0] < 1e-3 * 10.0);
        }
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut w = vec![0.0f64; 8 * 20];
        orthogonal_init(&mut w, 8, 20, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..20).map(|k| w[i * 20 + k] * w[j * 20 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cast_roundtrip_through_f32() {
        let n = net(13, 2);
        let back: MlpPolicy<f64> = n.cast::<f32>().cast();
        assert_eq!(back.param_count(), n.param_count());
        let (a, _) = n.forward(&[0.1; 13]).unwrap();
        let (b, _) = back.forward(&[0.1; 13]).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-5));
    }
}
