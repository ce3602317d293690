//! AdamW with bias correction and decoupled weight decay.

use std::collections::BTreeMap;

use crate::encoder::Tensors;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every tensor of `params` using the matching
    /// tensor of `grads`.
    ///
    /// `theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
    /// Nothing is modified if any gradient entry is non-finite.
    pub fn step<P: Tensors>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        for (name, g) in &grads {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for ((name, theta), (gname, g)) in params.tensors_mut().into_iter().zip(grads) {
            debug_assert_eq!(name, gname);
            debug_assert_eq!(theta.len(), g.len());
            let mom = self.moments.entry(name).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            for i in 0..theta.len() {
                mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g[i];
                mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                theta[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * theta[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Flat(Vec<f64>);

    impl Tensors for Flat {
        fn tensors(&self) -> Vec<(String, &[f64])> {
            vec![("x".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
            vec![("x".into(), &mut self.0)]
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        let mut p = Flat(vec![1.0, -2.0]);
        opt.step(&mut p, &Flat(vec![0.0, 0.0])).unwrap();
        assert_eq!(p, Flat(vec![1.0, -2.0]));
    }

    #[test]
    fn single_step_by_hand() {
        // m_hat = 2, v_hat = 4, so the step is lr * 2 / 2.
        let mut opt = AdamW::new(AdamWConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 0.0,
            weight_decay: 0.0,
        });
        let mut p = Flat(vec![1.0]);
        opt.step(&mut p, &Flat(vec![2.0])).unwrap();
        assert!((p.0[0] - 0.9).abs() < 1e-12, "{}", p.0[0]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn decoupled_decay_shrinks() {
        let mut opt = AdamW::new(AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        });
        let mut p = Flat(vec![2.0, -4.0]);
        opt.step(&mut p, &Flat(vec![0.0, 0.0])).unwrap();
        assert!((p.0[0] - 2.0 * 0.95).abs() < 1e-15);
        assert!((p.0[1] + 4.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut p = Flat(vec![1.0]);
        let err = opt.step(&mut p, &Flat(vec![f64::NAN])).unwrap_err();
        assert!(err.to_string().contains('x'));
        assert_eq!(p, Flat(vec![1.0]));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut opt = AdamW::new(AdamWConfig::default());
            let mut p = Flat(vec![0.3, -0.7, 1.1]);
            for k in 0..5 {
                let g = Flat(p.0.iter().map(|x| x * (k as f64 + 0.5)).collect());
                opt.step(&mut p, &g).unwrap();
            }
            p.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
