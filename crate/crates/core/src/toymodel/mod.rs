//! A desk-scale segmentation model whose first layer is the patch embedding
//! `z₀ = xᵢ·E + E_pos`, followed by a per-patch GELU MLP head, plus a
//! synthetic dataset to train it on.

mod dataset;
mod model;
mod train;

pub use dataset::{
    gen_dataset, gen_sample, load_dataset, save_dataset, SyntheticSample, IMAGE_CHANNELS, IMAGE_SIZE, NUM_CLASSES,
};
pub use model::{gelu, Gradients, Logits, ModelConfig, ToyModel, HEAD_MAGIC, PARAM_NAMES};
pub use train::{poly_lr, train, train_with, TrainConfig};

/// Dataset seed and size used for training by default.
pub const DEFAULT_TRAIN_DATA_SEED: u64 = 0;
pub const DEFAULT_TRAIN_SIZE: usize = 512;
/// Held-out split: a different dataset seed, so no sample is shared.
pub const DEFAULT_TEST_DATA_SEED: u64 = 1;
pub const DEFAULT_TEST_SIZE: usize = 64;
