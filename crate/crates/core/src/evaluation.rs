//! Clustering quality, embedding correlation and cross-run overlap statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hdae::EmbeddingTable;
use crate::io::fmt_f64;
use crate::seed::rng;
use crate::Scalar;

pub const DEFAULT_SILHOUETTE_CAP: usize = 4096;
pub const DEFAULT_KMEANS_MAX_ITERS: usize = 300;

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_rows(x: ArrayView2<f64>) -> usize {
    x.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

/// Lloyd's algorithm from k-means++ seeds.
pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("k-means input contains non-finite values".into()));
    }
    let distinct = distinct_rows(x);
    if k > distinct {
        return Err(Error::Config(format!("k={k} exceeds the {distinct} distinct rows")));
    }
    let mut centroids = plus_plus_seeds(x, k, seed);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for (i, row) in x.rows().into_iter().enumerate() {
            let (best, d) = nearest(row, centroids.view());
            if labels[i] != best {
                changed = true;
                labels[i] = best;
            }
            dist[i] = d;
        }
        repair_empty(&mut labels, &mut dist, &mut centroids, x);
        history.push(dist.iter().sum());
        if !changed {
            converged = true;
            break;
        }
        centroids = means(x, &labels, k, &centroids);
    }
    Ok(KMeansResult {
        labels,
        centroids,
        inertia_history: history,
        iterations,
        converged,
    })
}

fn nearest(row: ArrayView1<f64>, centroids: ArrayView2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(x: ArrayView2<f64>, k: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng(seed);
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let mut pick = n - 1;
        if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            // rounding can run past the end; fall back to the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
        }
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, centroids.row(c)));
        }
    }
    centroids
}

/// An empty cluster takes over the point farthest from its own centroid.
fn repair_empty(labels: &mut [usize], dist: &mut [f64], centroids: &mut Array2<f64>, x: ArrayView2<f64>) {
    let k = centroids.nrows();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("k <= distinct rows leaves a cluster with two points");
        labels[far] = empty;
        dist[far] = 0.0;
        centroids.row_mut(empty).assign(&x.row(far));
    }
}

fn means(x: ArrayView2<f64>, labels: &[usize], k: usize, previous: &Array2<f64>) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] == 0 {
            sums.row_mut(c).assign(&previous.row(c));
        } else {
            sums.row_mut(c).mapv_inplace(|v| v / counts[c] as f64);
        }
    }
    sums
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteReport {
    pub score: f64,
    pub n_points: usize,
    /// Points scored; below `n_points` when the subsample cap applied.
    pub n_used: usize,
    pub cap: usize,
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// score 0. Above `cap` points a seeded subsample of size `cap` is scored.
pub fn silhouette_score(x: ArrayView2<f64>, labels: &[usize], cap: usize, seed: u64) -> Result<SilhouetteReport> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let idx: Vec<usize> = if cap > 0 && n > cap {
        let mut picked = sample(&mut rng(seed), n, cap).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };
    let clusters: BTreeSet<usize> = idx.iter().map(|&i| labels[i]).collect();
    if clusters.len() < 2 {
        return Err(Error::UndefinedScore(format!(
            "silhouette needs at least 2 clusters, got {}",
            clusters.len()
        )));
    }
    let slot: BTreeMap<usize, usize> = clusters.iter().enumerate().map(|(s, &c)| (c, s)).collect();
    let mut sizes = vec![0usize; clusters.len()];
    for &i in &idx {
        sizes[slot[&labels[i]]] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; clusters.len()];
    for &i in &idx {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &j in &idx {
            if i != j {
                sums[slot[&labels[j]]] += sq_dist(x.row(i), x.row(j)).sqrt();
            }
        }
        let own = slot[&labels[i]];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..sums.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(SilhouetteReport {
        score: total / idx.len() as f64,
        n_points: n,
        n_used: idx.len(),
        cap,
    })
}

/// Column-wise z-score with population std; constant columns become 0.
pub fn zscore_columns(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    let n = x.nrows().max(1) as f64;
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if std < crate::features::CONSTANT_STD_THRESHOLD {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
    out
}

/// Pearson correlation between embedding dimensions. Constant dimensions
/// correlate 0 with everything else and 1 with themselves.
pub fn embedding_correlation<T: Scalar>(emb: &EmbeddingTable<T>) -> Result<Array2<f64>> {
    let x = emb.vectors.mapv(|v| v.as_f64());
    correlation_matrix(x.view())
}

pub fn correlation_matrix(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::Shape(format!("correlation needs at least 2 rows, got {n}")));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centred = &x - &mean;
    let norms: Vec<f64> = centred.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let mut out = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        out[[i, i]] = 1.0;
        for j in i + 1..d {
            let r = if norms[i] > 0.0 && norms[j] > 0.0 {
                let c = centred.column(i).dot(&centred.column(j)) / (norms[i] * norms[j]);
                c.clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[[i, j]] = r;
            out[[j, i]] = r;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    /// Sorted selection labels; row/column order of the matrices.
    pub labels: Vec<String>,
    pub sizes: Vec<usize>,
    pub counts: Array2<usize>,
    /// Overlap as a percentage of the smaller of the two sets.
    pub percentages: Array2<f64>,
    pub unequal_sizes: bool,
    pub unique_count: usize,
    /// Unique count over the largest selection size.
    pub unique_ratio: f64,
    /// `multiplicity[m - 1]` = candidates chosen by exactly `m` runs.
    pub multiplicity: Vec<usize>,
}

impl OverlapReport {
    pub fn runs(&self) -> usize {
        self.labels.len()
    }

    /// Candidates chosen by at least `pct` percent of runs.
    pub fn at_least_percent(&self, pct: f64) -> usize {
        let need = crate::consensus::required_diversity(self.runs(), pct / 100.0).max(1);
        self.multiplicity[need - 1..].iter().sum()
    }

    /// `label_a,label_b,size_a,size_b,overlap,percent` for each unordered pair.
    pub fn pairwise_csv(&self) -> String {
        let mut out = String::from("label_a,label_b,size_a,size_b,overlap,percent\n");
        for i in 0..self.runs() {
            for j in i + 1..self.runs() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    self.labels[i],
                    self.labels[j],
                    self.sizes[i],
                    self.sizes[j],
                    self.counts[[i, j]],
                    fmt_f64(self.percentages[[i, j]])
                );
            }
        }
        out
    }

    /// `runs,count` rows: candidates chosen by exactly that many runs.
    pub fn multiplicity_csv(&self) -> String {
        let mut out = String::from("runs,count\n");
        for (m, c) in self.multiplicity.iter().enumerate() {
            let _ = writeln!(out, "{},{}", m + 1, c);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "runs: {}", self.runs());
        let _ = writeln!(s, "unique candidates: {}", self.unique_count);
        let _ = writeln!(s, "unique ratio: {:.4}", self.unique_ratio);
        if self.unequal_sizes {
            let _ = writeln!(s, "note: selections differ in size; percentages use the smaller set");
        }
        for q in [100.0, 75.0, 50.0] {
            let _ = writeln!(s, "chosen by >= {q}% of runs: {}", self.at_least_percent(q));
        }
        s
    }
}

/// Overlap statistics over labelled id sets. Input order does not matter.
pub fn overlap_stats(selections: &[(String, Vec<usize>)]) -> Result<OverlapReport> {
    if selections.len() < 2 {
        return Err(Error::Config("overlap statistics need at least 2 selections".into()));
    }
    let mut sets: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (label, ids) in selections {
        if sets.insert(label, ids.iter().copied().collect()).is_some() {
            return Err(Error::Config(format!("duplicate selection label '{label}'")));
        }
    }
    let labels: Vec<String> = sets.keys().map(|s| s.to_string()).collect();
    let sets: Vec<BTreeSet<usize>> = sets.into_values().collect();
    let r = sets.len();
    let sizes: Vec<usize> = sets.iter().map(BTreeSet::len).collect();
    let mut counts = Array2::zeros((r, r));
    let mut percentages = Array2::zeros((r, r));
    for i in 0..r {
        for j in 0..r {
            let c = sets[i].intersection(&sets[j]).count();
            counts[[i, j]] = c;
            let base = sizes[i].min(sizes[j]);
            percentages[[i, j]] = if base == 0 { 0.0 } else { 100.0 * c as f64 / base as f64 };
        }
    }
    let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &sets {
        for &id in s {
            *tally.entry(id).or_default() += 1;
        }
    }
    let mut multiplicity = vec![0; r];
    for &m in tally.values() {
        multiplicity[m - 1] += 1;
    }
    let per_run = sizes.iter().copied().max().unwrap_or(0);
    Ok(OverlapReport {
        unequal_sizes: sizes.iter().any(|&s| s != sizes[0]),
        unique_count: tally.len(),
        unique_ratio: if per_run == 0 { 0.0 } else { tally.len() as f64 / per_run as f64 },
        labels,
        sizes,
        counts,
        percentages,
        multiplicity,
    })
}
