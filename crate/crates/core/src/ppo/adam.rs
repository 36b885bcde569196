use crate::num::Scalar;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, lr: T) -> Self {
        Adam {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-5),
            m: vec![T::ZERO; n_params],
            v: vec![T::ZERO; n_params],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let bc1 = T::ONE - self.beta1.powi(self.t);
        let bc2 = T::ONE - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = self.beta1 * *m + (T::ONE - self.beta1) * g;
            *v = self.beta2 * *v + (T::ONE - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its L2 norm is at most `max_norm`. Returns the original norm.
pub fn clip_grad_norm<T: Scalar>(grad: &mut [T], max_norm: T) -> T {
    let norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
    if norm > max_norm && norm > T::ZERO {
        let k = max_norm / (norm + T::of(1e-6));
        for g in grad.iter_mut() {
            *g = *g * k;
        }
    }
    norm
}
