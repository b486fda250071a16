//! Per-cell feature matrix: loading, z-scoring and neighbourhood aggregation.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{csv_error, GridModel};
use crate::io::{fmt_f64, write_atomic};
use crate::Scalar;

/// Columns whose population std falls below this are treated as constant.
pub const CONSTANT_STD_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStat {
    pub mean: f64,
    pub std: f64,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable<T = f64> {
    pub values: Array2<T>,
    pub feature_names: Vec<String>,
    pub norm_stats: Option<Vec<NormStat>>,
}

impl<T: Scalar> FeatureTable<T> {
    pub fn new(values: Array2<T>, feature_names: Vec<String>) -> Result<Self> {
        if values.ncols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} feature names",
                values.ncols(),
                feature_names.len()
            )));
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Parse {
                row: r,
                column: feature_names[c].clone(),
                message: "value is not finite".into(),
            });
        }
        Ok(Self {
            values,
            feature_names,
            norm_stats: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn cast<U: Scalar>(&self) -> FeatureTable<U> {
        FeatureTable {
            values: self.values.mapv(|v| U::lit(v.as_f64())),
            feature_names: self.feature_names.clone(),
            norm_stats: self.norm_stats.clone(),
        }
    }

    /// Z-scores every column with the population standard deviation.
    /// Constant columns become all zeros and are flagged in `norm_stats`.
    pub fn zscore_normalize(mut self) -> Result<Self> {
        if self.norm_stats.is_some() {
            return Err(Error::Config("feature table is already normalized".into()));
        }
        let n = self.n_rows();
        if n == 0 {
            return Err(Error::Shape("cannot normalize an empty table".into()));
        }
        let mut stats = Vec::with_capacity(self.n_features());
        for mut column in self.values.axis_iter_mut(Axis(1)) {
            let mean = column.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
            let var = column
                .iter()
                .map(|v| (v.as_f64() - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let std = var.sqrt();
            let constant = std < CONSTANT_STD_THRESHOLD;
            for v in column.iter_mut() {
                *v = if constant {
                    T::zero()
                } else {
                    T::lit((v.as_f64() - mean) / std)
                };
            }
            stats.push(NormStat {
                mean,
                std,
                constant,
            });
        }
        self.norm_stats = Some(stats);
        Ok(self)
    }

    /// Z-scores with previously computed statistics, e.g. those stored in a
    /// model checkpoint.
    pub fn normalize_with(mut self, stats: &[NormStat]) -> Result<Self> {
        if self.norm_stats.is_some() {
            return Err(Error::Config("feature table is already normalized".into()));
        }
        if stats.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "{} normalization statistics for {} features",
                stats.len(),
                self.n_features()
            )));
        }
        for (mut column, s) in self.values.axis_iter_mut(Axis(1)).zip(stats) {
            for v in column.iter_mut() {
                *v = if s.constant {
                    T::zero()
                } else {
                    T::lit((v.as_f64() - s.mean) / s.std)
                };
            }
        }
        self.norm_stats = Some(stats.to_vec());
        Ok(self)
    }

    /// Inverse of [`zscore_normalize`](Self::zscore_normalize).
    pub fn denormalize(&self) -> Result<FeatureTable<T>> {
        let stats = self
            .norm_stats
            .as_ref()
            .ok_or_else(|| Error::Config("feature table is not normalized".into()))?;
        let mut values = self.values.clone();
        for (mut column, s) in values.axis_iter_mut(Axis(1)).zip(stats) {
            for v in column.iter_mut() {
                *v = if s.constant {
                    T::lit(s.mean)
                } else {
                    T::lit(v.as_f64() * s.std + s.mean)
                };
            }
        }
        Ok(FeatureTable {
            values,
            feature_names: self.feature_names.clone(),
            norm_stats: None,
        })
    }

    /// Appends `<f>_nbr_mean` and `<f>_nbr_max` for every source feature,
    /// aggregated over cells at Chebyshev distance `1..=hops`. The centre
    /// cell is excluded and boundary cells use only the neighbours that exist.
    pub fn neighborhood_aggregate(
        &self,
        grid: &GridModel,
        source_features: &[&str],
        hops: usize,
    ) -> Result<FeatureTable<T>> {
        if hops == 0 {
            return Err(Error::Config("neighbourhood hops must be >= 1".into()));
        }
        if grid.len() != self.n_rows() {
            return Err(Error::Shape(format!(
                "grid has {} cells but feature table has {} rows",
                grid.len(),
                self.n_rows()
            )));
        }
        let sources = source_features
            .iter()
            .map(|f| self.column_index(f))
            .collect::<Result<Vec<_>>>()?;

        let h = hops as i32;
        let neighbours: Vec<Vec<usize>> = grid
            .cells()
            .iter()
            .map(|c| {
                let mut ids = Vec::with_capacity(((2 * h + 1) * (2 * h + 1) - 1) as usize);
                for dr in -h..=h {
                    for dc in -h..=h {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        if let Some(id) = grid.id_at(c.row + dr, c.col + dc) {
                            ids.push(id);
                        }
                    }
                }
                ids
            })
            .collect();

        let n = self.n_rows();
        let base = self.n_features();
        let mut values = Array2::<T>::zeros((n, base + 2 * sources.len()));
        values
            .slice_mut(ndarray::s![.., ..base])
            .assign(&self.values);
        let mut names = self.feature_names.clone();
        for (k, &src) in sources.iter().enumerate() {
            names.push(format!("{}_nbr_mean", self.feature_names[src]));
            names.push(format!("{}_nbr_max", self.feature_names[src]));
            for (id, nbrs) in neighbours.iter().enumerate() {
                // An isolated cell has no neighbours; it aggregates to zero.
                if nbrs.is_empty() {
                    continue;
                }
                let mut sum = T::zero();
                let mut max = T::neg_infinity();
                for &j in nbrs {
                    let v = self.values[[j, src]];
                    sum += v;
                    max = max.max(v);
                }
                values[[id, base + 2 * k]] = sum / T::from_usize_lossy(nbrs.len());
                values[[id, base + 2 * k + 1]] = max;
            }
        }
        Ok(FeatureTable {
            values,
            feature_names: names,
            norm_stats: self.norm_stats.clone(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (id, row) in self.values.outer_iter().enumerate() {
            out.push_str(&id.to_string());
            for v in row {
                out.push(',');
                out.push_str(&fmt_f64(v.as_f64()));
            }
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Parses the `id,<feature_1>,...` layout; rows must be in grid id order.
pub fn load_feature_table(path: &Path, grid: &GridModel) -> Result<FeatureTable<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("id") {
        return Err(Error::format(path, "first column must be 'id'"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::format(path, "no feature columns"));
    }
    let mut data = Vec::with_capacity(grid.len() * names.len());
    let mut rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let raw_id = record.get(0).unwrap_or("").trim();
        let id: usize = raw_id.parse().map_err(|_| Error::Parse {
            row: row_idx,
            column: "id".into(),
            message: format!("'{raw_id}' is not a cell id"),
        })?;
        if id != rows {
            return Err(Error::Structural {
                id: rows.min(id),
                message: format!("expected row for id {rows}, found id {id}"),
            });
        }
        if id >= grid.len() {
            return Err(Error::Structural {
                id,
                message: format!("id not in grid of {} cells", grid.len()),
            });
        }
        for (c, name) in names.iter().enumerate() {
            let raw = record.get(c + 1).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row: row_idx,
                column: name.clone(),
                message: format!("'{raw}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_idx,
                    column: name.clone(),
                    message: format!("'{raw}' is not finite"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != grid.len() {
        return Err(Error::Structural {
            id: rows,
            message: format!("missing feature row (grid has {} cells)", grid.len()),
        });
    }
    let values = Array2::from_shape_vec((rows, names.len()), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    FeatureTable::new(values, names)
}
