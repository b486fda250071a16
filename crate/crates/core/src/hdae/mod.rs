//! Hybrid denoising autoencoder: an encoder/decoder pair trained to
//! reconstruct clean features from noise-perturbed inputs, with a small
//! classification head on the L2-normalized latent code that predicts
//! station presence and shapes the embedding geometry.

mod adam;
mod checkpoint;
mod config;
mod embedding;
mod loss;
mod model;
mod noise;
mod params;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use config::{ModelConfig, TrainConfig};
pub use embedding::{encode, EmbeddingTable, RAW_FEATURES_FINGERPRINT};
pub use loss::{hybrid_loss, LossParts};
pub use model::{backward, forward, loss_and_gradients, ForwardOutput, Mode, LAYER_NORM_EPS};
pub use noise::{apply_noise, apply_noise_with};
pub use params::{init_params, Activation, LayerNorm, Layer, ModelParams};
pub use train::{train, EpochRecord, TrainReport, IMPROVEMENT_THRESHOLD};
