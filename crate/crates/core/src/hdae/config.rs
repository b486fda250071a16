use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub base_hidden: usize,
    pub depth: usize,
    pub noise_prob: f64,
    pub noise_std: f64,
    pub lambda_cls: f64,
    pub pos_weight: f64,
}

impl ModelConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            latent_dim: 8,
            base_hidden: 16,
            depth: 2,
            noise_prob: 0.3,
            noise_std: 0.1,
            lambda_cls: 0.1,
            pos_weight: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 || self.latent_dim == 0 || self.base_hidden == 0 {
            return fail("input_dim, latent_dim and base_hidden must be >= 1".into());
        }
        if self.depth == 0 || self.depth > 16 {
            return fail(format!("depth must be in 1..=16, got {}", self.depth));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return fail(format!("noise_prob must be in [0, 1], got {}", self.noise_prob));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.lambda_cls >= 0.0 && self.lambda_cls.is_finite()) {
            return fail(format!("lambda_cls must be >= 0, got {}", self.lambda_cls));
        }
        if !(self.pos_weight >= 1.0 && self.pos_weight.is_finite()) {
            return fail(format!("pos_weight must be >= 1, got {}", self.pos_weight));
        }
        Ok(())
    }

    /// Encoder hidden widths, widest first: `2^(depth-1)·h, …, 2h, h`.
    pub fn encoder_hidden(&self) -> Vec<usize> {
        (0..self.depth)
            .rev()
            .map(|i| self.base_hidden << i)
            .collect()
    }

    /// Encoder layer shapes as `(fan_in, fan_out)`.
    pub fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(self.encoder_hidden());
        dims.push(self.latent_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Decoder layer shapes, the mirror image of the encoder.
    pub fn decoder_shapes(&self) -> Vec<(usize, usize)> {
        self.encoder_shapes()
            .into_iter()
            .rev()
            .map(|(i, o)| (o, i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 512,
            max_epochs: 1024,
            patience: 15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must be >= 1".into(),
            ));
        }
        Ok(())
    }
}
