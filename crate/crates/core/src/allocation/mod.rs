//! Spatially constrained selection of expansion candidates.

mod graph;
mod mwis;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use graph::{build_conflict_graph, ConflictGraph};
pub use mwis::{
    greedy_mwis, is_independent, priority_order, swap_local_search, total_weight, LocalSearchOutcome,
    MIN_IMPROVEMENT,
};

use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::hdae::EmbeddingTable;
use crate::io::{fmt_f64, write_atomic};
use crate::similarity::{compute_weights, SimilarityConfig, WeightResult};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationConfig {
    pub n: usize,
    pub buffer_m: f64,
    pub similarity: SimilarityConfig,
    pub local_search_max_iters: usize,
    pub seed: u64,
    /// Restrict the reference set to these station cells.
    pub reference_ids: Option<Vec<usize>>,
    /// Restrict the candidate set to these cells.
    pub candidate_ids: Option<Vec<usize>>,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            n: 68,
            buffer_m: 250.0,
            similarity: SimilarityConfig::default(),
            local_search_max_iters: 50,
            seed: 0,
            reference_ids: None,
            candidate_ids: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult<T> {
    /// Selected cell ids, by descending weight (ties by ascending id).
    pub selected_ids: Vec<usize>,
    pub selected_weights: Vec<T>,
    pub total_weight: T,
    pub config: AllocationConfig,
    /// Local-search passes executed.
    pub iterations_used: usize,
    /// Set when fewer than `config.n` candidates could be selected.
    pub exhausted: bool,
    pub greedy_total_weight: T,
    /// Similarity weight of every candidate in the conflict graph.
    pub candidate_weights: WeightResult<T>,
}

impl<T: Scalar> AllocationResult<T> {
    /// `rank,id,row,col,x,y,weight`, rank starting at 1.
    pub fn to_csv(&self, grid: &GridModel) -> String {
        let mut out = String::from("rank,id,row,col,x,y,weight\n");
        for (rank, (&id, w)) in self.selected_ids.iter().zip(&self.selected_weights).enumerate() {
            let c = grid.cell(id);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rank + 1,
                id,
                c.row,
                c.col,
                fmt_f64(c.centroid.0),
                fmt_f64(c.centroid.1),
                fmt_f64(w.as_f64())
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path, grid: &GridModel) -> Result<()> {
        write_atomic(path, self.to_csv(grid).as_bytes())
    }
}

/// Reads the `id` and `weight` columns of an allocation CSV, in rank order.
pub fn read_allocation_csv(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(path, format!("missing column '{name}'")))
    };
    let (id_col, w_col) = (col("id")?, col("weight")?);
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let id = rec.get(id_col).unwrap_or("").trim().parse().map_err(|_| Error::Parse {
            row,
            column: "id".into(),
            message: "expected a cell id".into(),
        })?;
        let w = rec.get(w_col).unwrap_or("").trim().parse().map_err(|_| Error::Parse {
            row,
            column: "weight".into(),
            message: "expected a number".into(),
        })?;
        out.push((id, w));
    }
    Ok(out)
}

/// Conflict graph → similarity weights → greedy MWIS → swap local search.
pub fn allocate<T: Scalar>(
    grid: &GridModel,
    embeddings: &EmbeddingTable<T>,
    config: &AllocationConfig,
) -> Result<AllocationResult<T>> {
    if config.n == 0 {
        return Err(Error::Config("allocation size n must be >= 1".into()));
    }
    if embeddings.n_rows() != grid.len() {
        return Err(Error::Shape(format!(
            "{} embedding rows for {} grid cells",
            embeddings.n_rows(),
            grid.len()
        )));
    }
    let graph = build_conflict_graph(grid, config.buffer_m, config.candidate_ids.as_deref())?;
    let references = match &config.reference_ids {
        Some(ids) => {
            if let Some(&bad) = ids.iter().find(|&&i| i >= grid.len() || !grid.cell(i).has_station) {
                return Err(Error::Config(format!("reference id {bad} is not a station cell")));
            }
            ids.clone()
        }
        None => grid.station_ids(),
    };
    if references.is_empty() {
        return Err(Error::Config("reference set is empty".into()));
    }
    let candidate_weights = compute_weights(embeddings, &graph.candidate_ids, &references, config.similarity)?;
    let weights = &candidate_weights.weights;

    let greedy = greedy_mwis(&graph, weights, config.n);
    let greedy_total = total_weight(weights, &greedy);
    let outcome = swap_local_search(&graph, weights, &greedy, config.n, config.local_search_max_iters);
    debug_assert!(is_independent(&graph, &outcome.selection));

    let mut picked: Vec<(usize, T)> = outcome
        .selection
        .iter()
        .map(|&v| (graph.candidate_ids[v], weights[v]))
        .collect();
    picked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let selected_weights: Vec<T> = picked.iter().map(|p| p.1).collect();
    Ok(AllocationResult {
        selected_ids: picked.iter().map(|p| p.0).collect(),
        total_weight: selected_weights.iter().copied().sum(),
        selected_weights,
        config: config.clone(),
        iterations_used: outcome.passes,
        exhausted: outcome.selection.len() < config.n,
        greedy_total_weight: greedy_total,
        candidate_weights,
    })
}
