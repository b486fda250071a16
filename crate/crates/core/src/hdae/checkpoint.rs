//! Self-describing JSON checkpoint: model configuration, every tensor in
//! row-major order, and the normalization statistics of the training data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::features::NormStat;
use crate::io::write_atomic;
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "siting-hdae-checkpoint/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub feature_names: Vec<String>,
    pub norm_stats: Option<Vec<NormStat>>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: ModelConfig,
    feature_names: Vec<String>,
    norm_stats: Option<Vec<NormStat>>,
    fingerprint: String,
    tensors: Vec<TensorRecord>,
}

pub fn write_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    let p = &ckpt.params;
    let tensors = p
        .tensor_names()
        .into_iter()
        .zip(p.tensor_shapes())
        .zip(p.tensors())
        .map(|((name, shape), data)| TensorRecord {
            name,
            shape,
            data: data.iter().map(|v| v.as_f64()).collect(),
        })
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        config: p.config.clone(),
        feature_names: ckpt.feature_names.clone(),
        norm_stats: ckpt.norm_stats.clone(),
        fingerprint: p.fingerprint(),
        tensors,
    };
    let mut bytes = serde_json::to_vec_pretty(&file).map_err(|e| Error::format(path, e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint format '{}'", file.format),
        ));
    }
    file.config.validate()?;
    let mut params = ModelParams::<T>::zeros(&file.config);
    let names = params.tensor_names();
    let shapes = params.tensor_shapes();
    if file.tensors.len() != names.len() {
        return Err(Error::format(
            path,
            format!("expected {} tensors, found {}", names.len(), file.tensors.len()),
        ));
    }
    for (((slot, name), shape), rec) in params
        .tensors_mut()
        .into_iter()
        .zip(&names)
        .zip(&shapes)
        .zip(&file.tensors)
    {
        if &rec.name != name || &rec.shape != shape || rec.data.len() != slot.len() {
            return Err(Error::format(
                path,
                format!("tensor '{}' {:?} does not match expected '{}' {:?}", rec.name, rec.shape, name, shape),
            ));
        }
        for (dst, &v) in slot.iter_mut().zip(&rec.data) {
            *dst = T::lit(v);
        }
    }
    if !params.all_finite() {
        return Err(Error::format(path, "checkpoint contains non-finite values"));
    }
    Ok(Checkpoint {
        params,
        feature_names: file.feature_names,
        norm_stats: file.norm_stats,
    })
}
