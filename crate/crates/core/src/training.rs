//! Shared optimizer plumbing for the component trainers.

use adapipe_neural::{Adam, AdamConfig, Gradients, NeuralError, ParamStore, WarmupLinear};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Examples whose gradients are summed before one optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    /// Share of all steps spent warming up linearly to `lr`.
    pub warmup: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 8,
            lr: 1e-3,
            warmup: 0.1,
            seed: 0,
        }
    }
}

/// Adam with a warmup/linear-decay schedule over a known number of steps.
pub struct Trainer {
    adam: Adam,
    schedule: WarmupLinear,
    step: usize,
}

impl Trainer {
    pub fn new(config: &TrainConfig, examples: usize) -> Self {
        let per_epoch = examples.div_ceil(config.batch_size.max(1));
        let total = (per_epoch * config.epochs).max(1);
        Trainer {
            adam: Adam::new(AdamConfig::default()),
            schedule: WarmupLinear::with_fraction(config.lr, total, config.warmup),
            step: 0,
        }
    }

    /// Scales `grads` by `1 / weight` (when positive) and applies one update.
    pub fn step(
        &mut self,
        stores: &mut [&mut ParamStore],
        mut grads: Gradients,
        weight: f64,
    ) -> Result<(), NeuralError> {
        if weight > 0.0 {
            grads.scale(1.0 / weight);
        }
        let lr = self.schedule.rate(self.step);
        self.step += 1;
        self.adam.step(stores, &grads, lr)
    }
}

/// Shuffled mini-batches of example indices for one epoch.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}
