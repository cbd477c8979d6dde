use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::rng::uniform;

use super::dataset::SyntheticSample;
use super::model::{Gradients, ModelConfig, ToyModel};

/// SGD hyper-parameters and model architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub poly_power: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            iterations: 2000,
            batch_size: 8,
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            poly_power: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) || self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "need lr0 > 0, iterations >= 1, batch_size >= 1 (got {}, {}, {})",
                self.lr0, self.iterations, self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 || !(self.poly_power >= 0.0) {
            return Err(Error::InvalidArgument("momentum must be in [0, 1), weight_decay and poly_power >= 0".into()));
        }
        Ok(())
    }
}

/// Polynomial decay: `lr0 · (1 − t/iterations)^power`.
pub fn poly_lr(lr0: f64, t: usize, iterations: usize, power: f64) -> f64 {
    let frac = 1.0 - (t.min(iterations) as f64 / iterations as f64);
    lr0 * frac.powf(power)
}

/// Trains a fresh model; see [`train_with`].
pub fn train(cfg: &TrainConfig, data: &[SyntheticSample]) -> Result<ToyModel> {
    train_with(cfg, data, |_, _, _| {})
}

/// Momentum SGD (`v ← μv + g`, `θ ← θ − lr·v`) with polynomial learning-rate
/// decay. `on_step(iteration, lr, loss)` is called after every step.
///
/// Initialization uses `cfg.seed`; minibatches are sampled with replacement
/// from an independent stream of the same seed, so runs are bit-reproducible.
pub fn train_with(
    cfg: &TrainConfig,
    data: &[SyntheticSample],
    mut on_step: impl FnMut(usize, f64, f64),
) -> Result<ToyModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training data is empty".into()));
    }
    let mut model = ToyModel::init(&cfg.model, cfg.seed)?;
    let mut sampler = ChaCha20Rng::seed_from_u64(cfg.seed);
    sampler.set_stream(1);
    let mut velocity = Gradients::zeros_like(&model);

    for t in 0..cfg.iterations {
        let batch: Vec<&SyntheticSample> = (0..cfg.batch_size)
            .map(|_| &data[((uniform(&mut sampler) * data.len() as f64) as usize).min(data.len() - 1)])
            .collect();
        let (loss, grads) = match model.loss_and_grads(&batch) {
            Ok(v) => v,
            // shapes were already accepted at t = 0; later failures are overflow
            Err(Error::Shape(_)) if t > 0 => return Err(Error::Training { iteration: t, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Err(Error::Training { iteration: t, loss });
        }
        let lr = poly_lr(cfg.lr0, t, cfg.iterations, cfg.poly_power);
        velocity.momentum_update(&grads, cfg.momentum, cfg.weight_decay, model.params());
        model.apply_update(&velocity, lr);
        if model.params().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Training { iteration: t, loss: f64::NAN });
        }
        on_step(t, lr, loss);
    }
    Ok(model)
}
