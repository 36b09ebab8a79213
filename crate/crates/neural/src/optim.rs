use std::collections::HashMap;

use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;
use crate::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the gradients when their global norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// Adam with bias correction. Moment state is keyed per store and parameter,
/// so one optimizer can drive several stores in lockstep.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    moments: HashMap<(u64, usize), (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update to every non-frozen parameter of `stores` at the
    /// given learning rate. Frozen parameters are never written.
    pub fn step(
        &mut self,
        stores: &mut [&mut ParamStore],
        grads: &Gradients,
        lr: f64,
    ) -> Result<(), NeuralError> {
        if !grads.all_finite() {
            return Err(NeuralError::NonFinite("gradient".into()));
        }
        self.t += 1;
        let scale = match self.config.clip_norm {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for store in stores.iter_mut() {
            let ids: Vec<_> = store.ids().collect();
            for id in ids {
                if store.is_frozen(id) {
                    continue;
                }
                let g = match grads.get(store, id) {
                    Some(g) => g,
                    None => continue,
                };
                let value = store.value(id);
                if g.shape() != value.shape() {
                    return Err(NeuralError::Shape(format!(
                        "gradient {:?} for parameter `{}` of shape {:?}",
                        g.shape(),
                        store.get(id).name,
                        value.shape()
                    )));
                }
                let key = (store.uid(), id.index());
                let (m, v) = self.moments.entry(key).or_insert_with(|| {
                    (
                        Tensor::zeros(value.rows(), value.cols()),
                        Tensor::zeros(value.rows(), value.cols()),
                    )
                });
                let value = store.value_mut(id);
                for (((p, gi), mi), vi) in value
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    let gi = gi * scale;
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    let mh = *mi / bc1;
                    let vh = *vi / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Linear warmup to the peak rate over the first `warmup` steps, then linear
/// decay to zero at `total`.
#[derive(Debug, Clone, Copy)]
pub struct WarmupLinear {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl WarmupLinear {
    /// Schedule with the first `frac` of `total` steps used for warmup.
    pub fn with_fraction(peak: f64, total: usize, frac: f64) -> Self {
        let warmup = ((total as f64) * frac).round() as usize;
        WarmupLinear {
            peak,
            warmup,
            total,
        }
    }

    /// Learning rate for 0-based step `step`.
    pub fn rate(&self, step: usize) -> f64 {
        if self.warmup > 0 && step < self.warmup {
            return self.peak * (step + 1) as f64 / self.warmup as f64;
        }
        if self.total <= self.warmup {
            return self.peak;
        }
        let remaining = self.total.saturating_sub(step) as f64;
        let span = (self.total - self.warmup) as f64;
        self.peak * (remaining / span).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn scalar_store(v: f64) -> (ParamStore, crate::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::row_vector(vec![v]));
        (s, id)
    }

    fn grads_for(store: &ParamStore, id: crate::ParamId, gv: f64) -> Gradients {
        // d/dx (gv * x) = gv
        let mut g = Graph::new();
        let x = g.param(store, id);
        let loss = g.scale(x, gv);
        let loss = g.sum_all(loss);
        g.backward(loss)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut store, id) = scalar_store(0.0);
        let grads = grads_for(&store, id, 1.0);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            clip_norm: None,
            ..AdamConfig::default()
        });
        adam.step(&mut [&mut store], &grads, 0.1).unwrap();
        assert!((store.value(id).data()[0] + 0.1).abs() < 1e-9);
    }

    #[test]
    fn frozen_scalar_is_untouched() {
        let (mut store, id) = scalar_store(0.123456789);
        let before = store.value(id).data()[0].to_bits();
        // gradient is recorded while unfrozen, then the parameter is frozen
        let grads = grads_for(&store, id, 3.0);
        store.set_frozen(id, true);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut store], &grads, 0.1).unwrap();
        assert_eq!(store.value(id).data()[0].to_bits(), before);
    }

    /// Plain re-statement of Adam for a scalar, used as the oracle.
    fn reference_adam(mut p: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn zero_gradients_after_one_step_follow_momentum() {
        let (mut store, id) = scalar_store(1.0);
        let mut adam = Adam::new(AdamConfig {
            clip_norm: None,
            ..AdamConfig::default()
        });
        let seq = [2.0, 0.0, 0.0];
        for &gv in &seq {
            let grads = grads_for(&store, id, gv);
            adam.step(&mut [&mut store], &grads, 0.05).unwrap();
        }
        let expected = reference_adam(1.0, &seq, 0.05);
        assert!((store.value(id).data()[0] - expected).abs() < 1e-15);
        // the parameter kept moving during the zero-gradient steps
        assert!(expected < reference_adam(1.0, &seq[..1], 0.05));
    }

    #[test]
    fn warmup_schedule_shape() {
        let s = WarmupLinear::with_fraction(1e-3, 100, 0.1);
        assert_eq!(s.warmup, 10);
        assert!((s.rate(0) - 1e-4).abs() < 1e-18);
        assert!((s.rate(9) - 1e-3).abs() < 1e-18);
        assert!(s.rate(50) < 1e-3);
        assert_eq!(s.rate(100), 0.0);
    }
}
