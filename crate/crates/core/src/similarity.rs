//! Latent-space similarity between candidate and reference cells, and the
//! per-candidate weights built from it.

use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdae::EmbeddingTable;
use crate::io::{fmt_f64, write_atomic};
use crate::Scalar;

/// Norm floor for cosine similarity.
pub const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    TopK(usize),
    Kde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub method: Method,
    pub metric: Metric,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            method: Method::TopK(3),
            metric: Metric::Cosine,
        }
    }
}

impl SimilarityConfig {
    pub fn topk(k: usize, metric: Metric) -> Self {
        Self { method: Method::TopK(k), metric }
    }

    pub fn kde(metric: Metric) -> Self {
        Self { method: Method::Kde, metric }
    }

    pub fn with_k(self, k: usize) -> Self {
        Self { method: Method::TopK(k), ..self }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

impl fmt::Display for SimilarityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Method::TopK(k) => write!(f, "method=topk k={k} metric={}", self.metric),
            Method::Kde => write!(f, "method=kde metric={}", self.metric),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightResult<T> {
    pub candidate_ids: Vec<usize>,
    pub weights: Vec<T>,
    pub bandwidth: Option<T>,
    pub config: SimilarityConfig,
}

impl<T: Scalar> WeightResult<T> {
    /// `id,weight` sorted by descending weight (ties by ascending id), after
    /// a `#` comment line recording the configuration and bandwidth.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let bandwidth = self.bandwidth.map(|b| fmt_f64(b.as_f64())).unwrap_or_default();
        let mut out = format!("# {} bandwidth={bandwidth}\nid,weight\n", self.config);
        let mut order: Vec<usize> = (0..self.weights.len()).collect();
        order.sort_by(|&a, &b| {
            self.weights[b]
                .partial_cmp(&self.weights[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(self.candidate_ids[a].cmp(&self.candidate_ids[b]))
        });
        for i in order {
            out.push_str(&format!("{},{}\n", self.candidate_ids[i], fmt_f64(self.weights[i].as_f64())));
        }
        write_atomic(path, out.as_bytes())
    }
}

fn check_shapes<T>(c: &ArrayView2<T>, r: &ArrayView2<T>) -> Result<()> {
    if c.nrows() == 0 || r.nrows() == 0 {
        return Err(Error::Shape("candidate and reference sets must be non-empty".into()));
    }
    if c.ncols() != r.ncols() {
        return Err(Error::Shape(format!(
            "candidate dimension {} differs from reference dimension {}",
            c.ncols(),
            r.ncols()
        )));
    }
    Ok(())
}

fn norms<T: Scalar>(m: &ArrayView2<T>) -> Vec<T> {
    let guard = T::lit(NORM_GUARD);
    m.outer_iter()
        .map(|row| row.iter().map(|&v| v * v).sum::<T>().sqrt().max(guard))
        .collect()
}

#[inline]
fn dot<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

#[inline]
fn squared_distance<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// `|C|×|R|` similarities, higher is more similar: cosine similarity, or
/// the negated squared Euclidean distance.
pub fn pairwise_similarity<T: Scalar>(
    candidates: ArrayView2<T>,
    references: ArrayView2<T>,
    metric: Metric,
) -> Result<Array2<T>> {
    check_shapes(&candidates, &references)?;
    let mut out = Array2::zeros((candidates.nrows(), references.nrows()));
    match metric {
        Metric::Cosine => {
            let nc = norms(&candidates);
            let nr = norms(&references);
            for (i, c) in candidates.outer_iter().enumerate() {
                for (j, r) in references.outer_iter().enumerate() {
                    out[[i, j]] = dot(c, r) / (nc[i] * nr[j]);
                }
            }
        }
        Metric::Euclidean => {
            for (i, c) in candidates.outer_iter().enumerate() {
                for (j, r) in references.outer_iter().enumerate() {
                    out[[i, j]] = -squared_distance(c, r);
                }
            }
        }
    }
    Ok(out)
}

/// Non-negative distances used inside the RBF kernel: `1 − cos` for the
/// cosine metric, the Euclidean norm for the Euclidean metric.
pub fn kernel_distances<T: Scalar>(
    candidates: ArrayView2<T>,
    references: ArrayView2<T>,
    metric: Metric,
) -> Result<Array2<T>> {
    let sim = pairwise_similarity(candidates, references, metric)?;
    Ok(match metric {
        Metric::Cosine => sim.mapv(|s| (T::one() - s).max(T::zero())),
        Metric::Euclidean => sim.mapv(|s| (-s).max(T::zero()).sqrt()),
    })
}

/// Reference indices of the `k` most similar references, most similar
/// first; ties go to the lower reference index.
pub fn topk_neighbours<T: Scalar>(row: ArrayView1<T>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| {
        row[b]
            .partial_cmp(&row[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Mean of the `k` largest similarities in each row.
pub fn topk_weights<T: Scalar>(sim: &Array2<T>, k: usize) -> Result<Vec<T>> {
    if k == 0 || k > sim.ncols() {
        return Err(Error::Config(format!(
            "top-k requires 1 <= k <= {} references, got k={k}",
            sim.ncols()
        )));
    }
    let kk = T::from_usize_lossy(k);
    Ok(sim
        .axis_iter(Axis(0))
        .map(|row| {
            topk_neighbours(row, k)
                .into_iter()
                .map(|j| row[j])
                .sum::<T>()
                / kk
        })
        .collect())
}

/// Median of a non-empty set; the mean of the two middle values for even
/// counts.
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    })
}

/// Median over all candidate/reference kernel distances.
pub fn median_bandwidth<T: Scalar>(
    candidates: ArrayView2<T>,
    references: ArrayView2<T>,
    metric: Metric,
) -> Result<T> {
    let d = kernel_distances(candidates, references, metric)?;
    bandwidth_from_distances(&d)
}

fn bandwidth_from_distances<T: Scalar>(d: &Array2<T>) -> Result<T> {
    let flat: Vec<T> = d.iter().copied().collect();
    match median(&flat) {
        Some(m) if m > T::lit(NORM_GUARD) => Ok(m),
        _ => Err(Error::DegenerateBandwidth),
    }
}

/// RBF kernel density weights `Σ_j exp(−d_ij² / 2σ²)` with the median
/// bandwidth. Returns the weights and the bandwidth.
pub fn kde_weights<T: Scalar>(
    candidates: ArrayView2<T>,
    references: ArrayView2<T>,
    metric: Metric,
) -> Result<(Vec<T>, T)> {
    let d = kernel_distances(candidates, references, metric)?;
    let sigma = bandwidth_from_distances(&d)?;
    let denom = T::lit(2.0) * sigma * sigma;
    let weights = d
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|&x| (-(x * x) / denom).exp()).sum::<T>())
        .collect();
    Ok((weights, sigma))
}

/// Weights for `candidate_ids` against `reference_ids` in `embeddings`.
pub fn compute_weights<T: Scalar>(
    embeddings: &EmbeddingTable<T>,
    candidate_ids: &[usize],
    reference_ids: &[usize],
    config: SimilarityConfig,
) -> Result<WeightResult<T>> {
    let n = embeddings.n_rows();
    if let Some(&bad) = candidate_ids.iter().chain(reference_ids).find(|&&i| i >= n) {
        return Err(Error::Structural {
            id: bad,
            message: format!("no embedding row (table has {n})"),
        });
    }
    let c = embeddings.vectors.select(Axis(0), candidate_ids);
    let r = embeddings.vectors.select(Axis(0), reference_ids);
    let (weights, bandwidth) = match config.method {
        Method::TopK(k) => {
            let sim = pairwise_similarity(c.view(), r.view(), config.metric)?;
            (topk_weights(&sim, k)?, None)
        }
        Method::Kde => {
            let (w, s) = kde_weights(c.view(), r.view(), config.metric)?;
            (w, Some(s))
        }
    };
    Ok(WeightResult {
        candidate_ids: candidate_ids.to_vec(),
        weights,
        bandwidth,
        config,
    })
}
