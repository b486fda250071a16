use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{distance, GridModel};

/// Conflict graph over candidate cells. Two candidates conflict when their
/// centroids are strictly closer than `buffer_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictGraph {
    pub candidate_ids: Vec<usize>,
    /// Neighbour lists as indices into `candidate_ids`, ascending.
    pub adjacency: Vec<Vec<usize>>,
    pub buffer_m: f64,
}

impl ConflictGraph {
    pub fn len(&self) -> usize {
        self.candidate_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate_ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Builds a graph directly from an adjacency list (indices), e.g. for
    /// synthetic instances. Lists are sorted and deduplicated.
    pub fn from_adjacency(candidate_ids: Vec<usize>, mut adjacency: Vec<Vec<usize>>) -> Result<Self> {
        if candidate_ids.len() != adjacency.len() {
            return Err(Error::Shape("one adjacency list per candidate required".into()));
        }
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            nbrs.dedup();
            if nbrs.iter().any(|&j| j == i || j >= candidate_ids.len()) {
                return Err(Error::Shape(format!("invalid neighbour list for vertex {i}")));
            }
        }
        for (i, nbrs) in adjacency.iter().enumerate() {
            for &j in nbrs {
                if adjacency[j].binary_search(&i).is_err() {
                    return Err(Error::Shape(format!("edge {i}-{j} is not symmetric")));
                }
            }
        }
        Ok(Self {
            candidate_ids,
            adjacency,
            buffer_m: f64::NAN,
        })
    }
}

/// Uniform bucket index over points; each bucket is `size` metres square.
struct BucketIndex {
    size: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl BucketIndex {
    fn new(points: impl Iterator<Item = (usize, (f64, f64))>, size: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points {
            buckets.entry(Self::key(p, size)).or_default().push(i);
        }
        Self { size, buckets }
    }

    fn key(p: (f64, f64), size: f64) -> (i64, i64) {
        ((p.0 / size).floor() as i64, (p.1 / size).floor() as i64)
    }

    /// Every indexed item whose bucket touches the 3×3 block around `p`;
    /// a superset of the items within `size` of `p`.
    fn near(&self, p: (f64, f64)) -> impl Iterator<Item = usize> + '_ {
        let (kx, ky) = Self::key(p, self.size);
        (-1..=1)
            .flat_map(move |dx| (-1..=1).map(move |dy| (kx + dx, ky + dy)))
            .filter_map(|k| self.buckets.get(&k))
            .flatten()
            .copied()
    }
}

/// Candidates are non-station cells (optionally restricted to `allowed`)
/// at least `buffer_m` from every station centroid; edges join candidates
/// strictly closer than `buffer_m`.
pub fn build_conflict_graph(grid: &GridModel, buffer_m: f64, allowed: Option<&[usize]>) -> Result<ConflictGraph> {
    if !(buffer_m >= 0.0 && buffer_m.is_finite()) {
        return Err(Error::Config(format!("buffer_m must be finite and >= 0, got {buffer_m}")));
    }
    grid.require_station()?;
    let pool: Vec<usize> = match allowed {
        Some(ids) => {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            ids.dedup();
            if let Some(&bad) = ids.iter().find(|&&i| i >= grid.len()) {
                return Err(Error::Structural {
                    id: bad,
                    message: "candidate id outside the grid".into(),
                });
            }
            ids
        }
        None => (0..grid.len()).collect(),
    };
    let bucket = buffer_m.max(grid.cell_size_m());
    let stations = BucketIndex::new(
        grid.cells().iter().filter(|c| c.has_station).map(|c| (c.id, c.centroid)),
        bucket,
    );
    let candidate_ids: Vec<usize> = pool
        .into_iter()
        .filter(|&id| {
            let c = grid.cell(id);
            !c.has_station
                && stations
                    .near(c.centroid)
                    .all(|s| distance(c.centroid, grid.cell(s).centroid) >= buffer_m)
        })
        .collect();
    if candidate_ids.is_empty() {
        return Err(Error::EmptyDomain { buffer_m });
    }

    let mut adjacency = vec![Vec::new(); candidate_ids.len()];
    if buffer_m > 0.0 {
        let index = BucketIndex::new(
            candidate_ids.iter().enumerate().map(|(i, &id)| (i, grid.cell(id).centroid)),
            bucket,
        );
        for (i, &id) in candidate_ids.iter().enumerate() {
            let p = grid.cell(id).centroid;
            let nbrs = &mut adjacency[i];
            nbrs.extend(
                index
                    .near(p)
                    .filter(|&j| j != i && distance(p, grid.cell(candidate_ids[j]).centroid) < buffer_m),
            );
            nbrs.sort_unstable();
        }
    }
    Ok(ConflictGraph {
        candidate_ids,
        adjacency,
        buffer_m,
    })
}
