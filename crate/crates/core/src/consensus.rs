//! Pooling of selections across parametrisations and geographic consensus zones.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{distance, GridModel};

pub const DEFAULT_EPS_M: f64 = 250.0;
pub const DEFAULT_UNANIMITY: f64 = 1.0;

/// One parametrisation's selected cell ids, tagged with a label such as `k=3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub label: String,
    pub ids: Vec<usize>,
}

impl Selection {
    pub fn new(label: impl Into<String>, ids: Vec<usize>) -> Self {
        Self { label: label.into(), ids }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledCandidate {
    pub cell_id: usize,
    pub centroid: (f64, f64),
    pub selected_by: BTreeSet<String>,
}

impl PooledCandidate {
    pub fn diversity(&self) -> usize {
        self.selected_by.len()
    }
}

/// Union of all selections, sorted by cell id. Cells within `buffer_m` of a
/// station are dropped.
pub fn pool_candidates(selections: &[Selection], grid: &GridModel, buffer_m: f64) -> Result<Vec<PooledCandidate>> {
    if selections.is_empty() {
        return Err(Error::Config("no selections to pool".into()));
    }
    let mut seen = BTreeSet::new();
    for s in selections {
        if !seen.insert(s.label.as_str()) {
            return Err(Error::Config(format!("duplicate parametrisation label '{}'", s.label)));
        }
    }
    let stations: Vec<(f64, f64)> = grid.station_ids().iter().map(|&i| grid.cell(i).centroid).collect();
    let mut pooled: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for s in selections {
        for &id in &s.ids {
            if id >= grid.len() {
                return Err(Error::Structural {
                    id,
                    message: format!("selection '{}' refers to a cell outside the grid", s.label),
                });
            }
            pooled.entry(id).or_default().insert(s.label.clone());
        }
    }
    Ok(pooled
        .into_iter()
        .filter(|(id, _)| {
            let c = grid.cell(*id);
            !c.has_station && stations.iter().all(|&p| distance(c.centroid, p) >= buffer_m)
        })
        .map(|(cell_id, selected_by)| PooledCandidate {
            cell_id,
            centroid: grid.cell(cell_id).centroid,
            selected_by,
        })
        .collect())
}

/// DBSCAN cluster labels; `None` marks noise. Clusters are numbered in order
/// of their first point.
pub fn dbscan_geo(points: &[(f64, f64)], eps_m: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps_m > 0.0 && min_pts >= 1, "eps_m > 0 and min_pts >= 1 required");
    let neighbours = eps_neighbourhoods(points, eps_m);
    if min_pts == 1 {
        return connected_components(&neighbours).into_iter().map(Some).collect();
    }
    // neighbourhoods include the point itself
    let core: Vec<bool> = neighbours.iter().map(|n| n.len() + 1 >= min_pts).collect();
    let mut labels = vec![None; points.len()];
    let mut next = 0;
    for start in 0..points.len() {
        if labels[start].is_some() || !core[start] {
            continue;
        }
        labels[start] = Some(next);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

fn eps_neighbourhoods(points: &[(f64, f64)], eps_m: f64) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); points.len()];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if distance(points[i], points[j]) <= eps_m {
                out[i].push(j);
                out[j].push(i);
            }
        }
    }
    out
}

fn connected_components(adj: &[Vec<usize>]) -> Vec<usize> {
    let mut label = vec![usize::MAX; adj.len()];
    let mut next = 0;
    for start in 0..adj.len() {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &adj[p] {
                if label[q] == usize::MAX {
                    label[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    label
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusZone {
    /// Rank after sorting, starting at 0.
    pub zone_id: usize,
    pub member_ids: Vec<usize>,
    pub diversity: usize,
    pub size: usize,
    pub medoid_id: usize,
    pub selected_by: BTreeSet<String>,
}

/// Index into `points` of the medoid; ties go to the lower `ids` value.
pub fn medoid(points: &[(f64, f64)], ids: &[usize]) -> usize {
    let mut best = 0;
    let mut best_sum = f64::INFINITY;
    for i in 0..points.len() {
        let sum: f64 = points.iter().map(|&q| distance(points[i], q)).sum();
        if sum < best_sum || (sum == best_sum && ids[i] < ids[best]) {
            best = i;
            best_sum = sum;
        }
    }
    best
}

/// Groups pooled candidates by cluster label, ranks zones by
/// (diversity desc, size desc, min member id asc) and keeps those whose
/// diversity reaches `ceil(unanimity · n_parametrisations)`.
/// Noise points (`None`) are ignored.
pub fn rank_and_select(
    pooled: &[PooledCandidate],
    labels: &[Option<usize>],
    n_parametrisations: usize,
    unanimity: f64,
) -> Vec<ConsensusZone> {
    assert_eq!(pooled.len(), labels.len(), "one label per pooled candidate");
    let mut groups: BTreeMap<usize, Vec<&PooledCandidate>> = BTreeMap::new();
    for (p, l) in pooled.iter().zip(labels) {
        if let Some(l) = l {
            groups.entry(*l).or_default().push(p);
        }
    }
    let required = required_diversity(n_parametrisations, unanimity);
    let mut zones: Vec<ConsensusZone> = groups
        .into_values()
        .map(|mut members| {
            members.sort_by_key(|m| m.cell_id);
            let ids: Vec<usize> = members.iter().map(|m| m.cell_id).collect();
            let points: Vec<(f64, f64)> = members.iter().map(|m| m.centroid).collect();
            let selected_by: BTreeSet<String> = members.iter().flat_map(|m| m.selected_by.iter().cloned()).collect();
            ConsensusZone {
                zone_id: 0,
                diversity: selected_by.len(),
                size: ids.len(),
                medoid_id: ids[medoid(&points, &ids)],
                member_ids: ids,
                selected_by,
            }
        })
        .filter(|z| z.diversity >= required)
        .collect();
    zones.sort_by(|a, b| {
        b.diversity
            .cmp(&a.diversity)
            .then(b.size.cmp(&a.size))
            .then(a.member_ids[0].cmp(&b.member_ids[0]))
    });
    for (i, z) in zones.iter_mut().enumerate() {
        z.zone_id = i;
    }
    zones
}

/// Minimum zone diversity for a unanimity fraction in `[0, 1]`.
pub fn required_diversity(n_parametrisations: usize, unanimity: f64) -> usize {
    let raw = (unanimity.clamp(0.0, 1.0) * n_parametrisations as f64 - 1e-9).ceil();
    raw.max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusConfig {
    pub eps_m: f64,
    pub min_pts: usize,
    pub unanimity: f64,
    pub buffer_m: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            eps_m: DEFAULT_EPS_M,
            min_pts: 1,
            unanimity: DEFAULT_UNANIMITY,
            buffer_m: 250.0,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_m > 0.0 && self.eps_m.is_finite()) {
            return Err(Error::Config(format!("eps_m must be positive, got {}", self.eps_m)));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("min_pts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.unanimity) {
            return Err(Error::Config(format!("unanimity must lie in [0, 1], got {}", self.unanimity)));
        }
        if self.buffer_m.is_nan() || self.buffer_m < 0.0 {
            return Err(Error::Config("buffer_m must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub pooled: Vec<PooledCandidate>,
    /// Every cluster before the unanimity filter.
    pub cluster_count: usize,
    pub zones: Vec<ConsensusZone>,
}

/// Pool, cluster, rank and filter in one call.
pub fn run_consensus(selections: &[Selection], grid: &GridModel, cfg: &ConsensusConfig) -> Result<ConsensusOutcome> {
    cfg.validate()?;
    let pooled = pool_candidates(selections, grid, cfg.buffer_m)?;
    let points: Vec<(f64, f64)> = pooled.iter().map(|p| p.centroid).collect();
    let labels = dbscan_geo(&points, cfg.eps_m, cfg.min_pts);
    let cluster_count = labels.iter().flatten().collect::<BTreeSet<_>>().len();
    let zones = rank_and_select(&pooled, &labels, selections.len(), cfg.unanimity);
    Ok(ConsensusOutcome {
        pooled,
        cluster_count,
        zones,
    })
}
