//! First-order (Adam) and gradient-free (SPSA) parameter updaters.
//!
//! Both are plain minimizers over a flat parameter vector with an optional
//! frozen mask: frozen positions are never perturbed and never updated, so
//! they stay bit-identical across a run. Both are deterministic given their
//! configuration (SPSA owns a seeded generator).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

/// Adam state over a fixed-size parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    step: usize,
}

impl<T: Scalar> Adam<T> {
    pub fn new(dim: usize, lr: T) -> Self {
        Adam {
            lr,
            beta1: T::from_f64_const(0.9),
            beta2: T::from_f64_const(0.999),
            epsilon: T::from_f64_const(1e-8),
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            step: 0,
        }
    }

    /// One descent step in place. `frozen[i]` skips position `i` entirely.
    pub fn step(&mut self, params: &mut [T], grad: &[T], frozen: &[bool]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), frozen.len());
        self.step += 1;
        let t = self.step as i32;
        let bias1 = T::one() - self.beta1.powi(t);
        let bias2 = T::one() - self.beta2.powi(t);
        for i in 0..params.len() {
            if frozen[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// SPSA minimizer with the standard decay schedule
/// `a_k = a / (k + 1 + A)^0.602`, `c_k = c / (k + 1)^0.101` and Rademacher
/// perturbations.
#[derive(Debug, Clone)]
pub struct Spsa<T> {
    a: T,
    c: T,
    stability: T,
    alpha: f64,
    gamma: f64,
    k: usize,
    rng: ChaCha8Rng,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Spsa<T> {
    pub fn new(a: T, c: T, stability: T, seed: u64) -> Self {
        Spsa {
            a,
            c,
            stability,
            alpha: 0.602,
            gamma: 0.101,
            k: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            _marker: std::marker::PhantomData,
        }
    }

    fn gain(&self) -> T {
        let denom = (self.k as f64 + 1.0 + self.stability.to_f64().unwrap()).powf(self.alpha);
        self.a / T::from_f64_const(denom)
    }

    fn perturbation_scale(&self) -> T {
        let denom = (self.k as f64 + 1.0).powf(self.gamma);
        self.c / T::from_f64_const(denom)
    }

    /// One two-sided step: evaluates `objective` at `theta +- c_k delta`,
    /// forms the simultaneous gradient estimate and descends. Returns the
    /// mean of the two objective evaluations as the step's loss estimate.
    pub fn step(
        &mut self,
        params: &mut [T],
        frozen: &[bool],
        mut objective: impl FnMut(&[T]) -> T,
    ) -> T {
        debug_assert_eq!(params.len(), frozen.len());
        let ck = self.perturbation_scale();
        let delta: Vec<T> = (0..params.len())
            .map(|i| {
                if frozen[i] {
                    T::zero()
                } else if self.rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                }
            })
            .collect();

        let mut probe: Vec<T> = params.to_vec();
        for i in 0..probe.len() {
            probe[i] = params[i] + ck * delta[i];
        }
        let y_plus = objective(&probe);
        for i in 0..probe.len() {
            probe[i] = params[i] - ck * delta[i];
        }
        let y_minus = objective(&probe);

        let ak = self.gain();
        let two = T::from_f64_const(2.0);
        for i in 0..params.len() {
            if frozen[i] || delta[i] == T::zero() {
                continue;
            }
            let ghat = (y_plus - y_minus) / (two * ck * delta[i]);
            params[i] -= ak * ghat;
        }
        self.k += 1;
        (y_plus + y_minus) / two
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - i as f64).powi(2))
            .sum()
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let dim = 4;
        let mut params = vec![5.0f64; dim];
        let frozen = vec![false; dim];
        let mut opt = Adam::new(dim, 0.05);
        for _ in 0..4000 {
            let grad: Vec<f64> = params
                .iter()
                .enumerate()
                .map(|(i, v)| 2.0 * (v - i as f64))
                .collect();
            opt.step(&mut params, &grad, &frozen);
        }
        for (i, v) in params.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-3, "component {i}: {v}");
        }
    }

    #[test]
    fn adam_respects_frozen_mask() {
        let mut params = vec![5.0f64, 5.0];
        let frozen = vec![true, false];
        let before = params[0].to_bits();
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..100 {
            let grad: Vec<f64> = params.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut params, &grad, &frozen);
        }
        assert_eq!(params[0].to_bits(), before);
        assert!(params[1].abs() < 5.0);
    }

    #[test]
    fn spsa_minimizes_quadratic_and_replays() {
        let run = |seed: u64| {
            let dim = 3;
            let mut params = vec![4.0f64; dim];
            let frozen = vec![false; dim];
            let mut opt = Spsa::new(0.4, 0.2, 10.0, seed);
            let mut history = Vec::new();
            for _ in 0..800 {
                history.push(opt.step(&mut params, &frozen, quadratic));
            }
            (params, history)
        };
        let (params, history) = run(3);
        assert!(quadratic(&params) < 0.05, "residual {}", quadratic(&params));
        let (params2, history2) = run(3);
        assert_eq!(params, params2);
        assert_eq!(history, history2);
    }

    #[test]
    fn spsa_respects_frozen_mask() {
        let mut params = vec![2.0f64, 2.0, 2.0];
        let frozen = vec![false, true, false];
        let before = params[1].to_bits();
        let mut opt = Spsa::new(0.3, 0.1, 5.0, 9);
        for _ in 0..200 {
            opt.step(&mut params, &frozen, quadratic);
        }
        assert_eq!(params[1].to_bits(), before);
    }
}
