use ndarray::{Array1, Array2};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use crate::seed;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Array1<T>,
    pub shift: Array1<T>,
}

/// Affine map `y = x·Wᵀ + b`, optionally followed by layer normalization,
/// then the activation. `weight` is `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub norm: Option<LayerNorm<T>>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    fn zeros(fan_in: usize, fan_out: usize, norm: bool, activation: Activation) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
            norm: norm.then(|| LayerNorm {
                gain: Array1::ones(fan_out),
                shift: Array1::zeros(fan_out),
            }),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// All learnable tensors of the model.
///
/// Encoder hidden layers and decoder hidden layers are `linear → layer
/// norm → ReLU`; the last encoder layer is `linear → ReLU` (so latents are
/// non-negative) and the last decoder layer is linear. The head is
/// `ℓ2-normalize → linear → ReLU → linear` producing one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub encoder: Vec<Layer<T>>,
    pub decoder: Vec<Layer<T>>,
    pub head_hidden: Layer<T>,
    pub head_output: Layer<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Correctly shaped parameters with zero weights, unit gains.
    pub fn zeros(config: &ModelConfig) -> Self {
        let enc = config.encoder_shapes();
        let dec = config.decoder_shapes();
        let last_enc = enc.len() - 1;
        let last_dec = dec.len() - 1;
        let encoder = enc
            .iter()
            .enumerate()
            .map(|(i, &(fi, fo))| {
                if i == last_enc {
                    Layer::zeros(fi, fo, false, Activation::Relu)
                } else {
                    Layer::zeros(fi, fo, true, Activation::Relu)
                }
            })
            .collect();
        let decoder = dec
            .iter()
            .enumerate()
            .map(|(i, &(fi, fo))| {
                if i == last_dec {
                    Layer::zeros(fi, fo, false, Activation::Identity)
                } else {
                    Layer::zeros(fi, fo, true, Activation::Relu)
                }
            })
            .collect();
        Self {
            config: config.clone(),
            encoder,
            decoder,
            head_hidden: Layer::zeros(config.latent_dim, config.base_hidden, false, Activation::Relu),
            head_output: Layer::zeros(config.base_hidden, 1, false, Activation::Identity),
        }
    }

    /// Same shapes, every entry zero (gains included); used for gradients
    /// and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(T::zero());
        }
        out
    }

    fn layers(&self) -> impl Iterator<Item = (String, &Layer<T>)> {
        let enc = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("encoder.{i}"), l));
        let dec = self
            .decoder
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("decoder.{i}"), l));
        enc.chain(dec).chain([
            ("head.hidden".to_string(), &self.head_hidden),
            ("head.output".to_string(), &self.head_output),
        ])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain([&mut self.head_hidden, &mut self.head_output])
    }

    /// Tensor names in the canonical order shared by `tensors`,
    /// `tensors_mut` and `tensor_shapes`.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, layer) in self.layers() {
            names.push(format!("{prefix}.weight"));
            names.push(format!("{prefix}.bias"));
            if layer.norm.is_some() {
                names.push(format!("{prefix}.norm.gain"));
                names.push(format!("{prefix}.norm.shift"));
            }
        }
        names
    }

    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for (_, layer) in self.layers() {
            shapes.push(layer.weight.shape().to_vec());
            shapes.push(vec![layer.bias.len()]);
            if let Some(n) = &layer.norm {
                shapes.push(vec![n.gain.len()]);
                shapes.push(vec![n.shift.len()]);
            }
        }
        shapes
    }

    /// Row-major views of every tensor.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for (_, layer) in self.layers() {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
            if let Some(n) = &layer.norm {
                out.push(n.gain.as_slice().expect("standard layout"));
                out.push(n.shift.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in self.layers_mut() {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
            if let Some(n) = &mut layer.norm {
                out.push(n.gain.as_slice_mut().expect("standard layout"));
                out.push(n.shift.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Hex SHA-256 over the configuration and every tensor (as f64, little
    /// endian, canonical order). Identical for f32 and f64 models only when
    /// the values coincide exactly.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.config).unwrap_or_default());
        for t in self.tensors() {
            for v in t {
                hasher.update(v.as_f64().to_le_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

/// Kaiming-uniform weights in `±sqrt(6 / fan_in)`, zero biases, unit
/// layer-norm gains and zero shifts.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> ModelParams<T> {
    let mut params = ModelParams::zeros(config);
    let mut rng = seed::rng(seed);
    for layer in params.layers_mut() {
        let bound = (6.0 / layer.fan_in() as f64).sqrt();
        for w in layer.weight.iter_mut() {
            *w = T::lit(rng.random_range(-bound..=bound));
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelConfig {
        ModelConfig::new(29)
    }

    #[test]
    fn kaiming_bounds_hold() {
        let p: ModelParams<f64> = init_params(&reference(), 3);
        // encoder.1 has fan_in 32: bound sqrt(6/32) = 0.4330127018922193
        let layer = &p.encoder[1];
        assert_eq!(layer.fan_in(), 32);
        let bound = (6.0f64 / 32.0).sqrt();
        assert!((bound - 0.4330127018922193).abs() < 1e-15);
        assert!(layer.weight.iter().all(|w| w.abs() <= bound));
        for (name, layer) in p.layers() {
            let b = (6.0 / layer.fan_in() as f64).sqrt();
            assert!(layer.weight.iter().all(|w| w.abs() <= b), "{name}");
            assert!(layer.weight.iter().any(|w| *w != 0.0), "{name}");
        }
    }

    #[test]
    fn biases_zero_and_norms_identity() {
        let p: ModelParams<f32> = init_params(&reference(), 1);
        for (_, layer) in p.layers() {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            if let Some(n) = &layer.norm {
                assert!(n.gain.iter().all(|&g| g == 1.0));
                assert!(n.shift.iter().all(|&s| s == 0.0));
            }
        }
    }

    #[test]
    fn deterministic_init() {
        let a: ModelParams<f64> = init_params(&reference(), 42);
        let b: ModelParams<f64> = init_params(&reference(), 42);
        let c: ModelParams<f64> = init_params(&reference(), 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn tensor_catalogue_is_consistent() {
        let p: ModelParams<f64> = init_params(&reference(), 0);
        let names = p.tensor_names();
        assert_eq!(names.len(), p.tensors().len());
        assert_eq!(names.len(), p.tensor_shapes().len());
        assert_eq!(names[0], "encoder.0.weight");
        assert!(names.contains(&"decoder.1.norm.gain".to_string()));
        assert!(!names.contains(&"encoder.2.norm.gain".to_string()));
        assert_eq!(names.last().unwrap(), "head.output.bias");
        for (t, s) in p.tensors().iter().zip(p.tensor_shapes()) {
            assert_eq!(t.len(), s.iter().product::<usize>());
        }
    }
}
