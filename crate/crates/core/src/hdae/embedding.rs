use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::model::encode_batch;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::grid::csv_error;
use crate::io::{fmt_f64, write_atomic};
use crate::Scalar;

/// One latent vector per grid cell, tagged with the producing model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub vectors: Array2<T>,
    pub fingerprint: String,
}

/// Fingerprint used when a feature table stands in for learned embeddings.
pub const RAW_FEATURES_FINGERPRINT: &str = "raw-features";

impl<T: Scalar> EmbeddingTable<T> {
    pub fn n_rows(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Uses (normalized) features directly as the embedding space.
    pub fn from_features(features: &FeatureTable<T>) -> Self {
        Self {
            vectors: features.values.clone(),
            fingerprint: RAW_FEATURES_FINGERPRINT.to_string(),
        }
    }

    /// `id,z_0,...,z_{d-1}`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id");
        for j in 0..self.dim() {
            out.push_str(&format!(",z_{j}"));
        }
        out.push('\n');
        for (id, row) in self.vectors.outer_iter().enumerate() {
            out.push_str(&id.to_string());
            for v in row {
                out.push(',');
                out.push_str(&fmt_f64(v.as_f64()));
            }
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }

    /// Reads an embedding CSV. The fingerprint becomes a hash of the values,
    /// since the file does not carry the model's.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let d = headers.len().saturating_sub(1);
        if headers.get(0) != Some("id") || d == 0 {
            return Err(Error::format(path, "expected header id,z_0,...,z_{d-1}"));
        }
        let mut data = Vec::new();
        let mut rows = 0usize;
        let mut hasher = Sha256::new();
        for (row_idx, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let id: usize = rec.get(0).unwrap_or("").trim().parse().map_err(|_| Error::Parse {
                row: row_idx,
                column: "id".into(),
                message: "expected a cell id".into(),
            })?;
            if id != rows {
                return Err(Error::Structural {
                    id: rows.min(id),
                    message: format!("expected embedding row for id {rows}, found {id}"),
                });
            }
            for j in 0..d {
                let raw = rec.get(j + 1).unwrap_or("").trim();
                let v: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
                    row: row_idx,
                    column: format!("z_{j}"),
                    message: format!("'{raw}' is not a finite number"),
                })?;
                hasher.update(v.to_le_bytes());
                data.push(T::lit(v));
            }
            rows += 1;
        }
        let vectors = Array2::from_shape_vec((rows, d), data).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self {
            vectors,
            fingerprint: hex::encode(&hasher.finalize()[..16]),
        })
    }
}

/// Latent codes for every row of `features`, computed in eval mode (no
/// noise). The classification head is not evaluated.
pub fn encode<T: Scalar>(params: &ModelParams<T>, features: &FeatureTable<T>) -> Result<EmbeddingTable<T>> {
    Ok(EmbeddingTable {
        vectors: encode_batch(params, &features.values)?,
        fingerprint: params.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdae::{forward, init_params, ModelConfig, Mode};

    fn table() -> FeatureTable<f64> {
        let mut v = Array2::from_shape_fn((12, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let r = v.row(2).to_owned();
        v.row_mut(9).assign(&r);
        FeatureTable::new(v, (0..5).map(|i| format!("f{i}")).collect()).unwrap()
    }

    #[test]
    fn shape_sign_and_duplicates() {
        let p: ModelParams<f64> = init_params(&ModelConfig::new(5), 2);
        let e = encode(&p, &table()).unwrap();
        assert_eq!(e.vectors.dim(), (12, 8));
        assert!(e.vectors.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(e.vectors.row(2), e.vectors.row(9));
        assert_eq!(e.fingerprint, p.fingerprint());
    }

    #[test]
    fn matches_full_forward_latent() {
        let p: ModelParams<f64> = init_params(&ModelConfig::new(5), 4);
        let t = table();
        let e = encode(&p, &t).unwrap();
        let f = forward(&p, &t.values, Mode::Eval).unwrap();
        assert_eq!(e.vectors, f.latent);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p: ModelParams<f64> = init_params(&ModelConfig::new(5), 5);
        let e = encode(&p, &table()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        e.write_csv(&path).unwrap();
        let back = EmbeddingTable::<f64>::read_csv(&path).unwrap();
        assert_eq!(back.vectors, e.vectors);
    }
}
