//! Seeded synthetic city used as a test substrate.
//!
//! Every cell belongs to an archetype. An archetype is a point in a small
//! latent factor space; a fixed random loading matrix maps it to the
//! observed features, and each observed value gets independent Gaussian
//! noise. Station cells and the planted zones share the station archetype,
//! so planted-zone cells are the ground-truth expansion candidates.
//! Background archetypes tile the rest of the grid as Voronoi regions.
//!
//! The largest background region is a decoy: its archetype is a positive
//! multiple of the station archetype, so after z-scoring it has the same
//! direction and cosine similarity on raw features cannot tell the two
//! apart. A few trailing features are pure noise.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::grid::{GridModel, DEFAULT_CELL_SIZE_M};
use crate::io::write_atomic;
use crate::seed;

const LATENT_FACTORS: usize = 4;
const BACKGROUND_ARCHETYPES: usize = 5;
/// Station-free margin around each planted zone, in cells. Four cells
/// (400 m centre to centre) keeps every zone cell outside a 250 m buffer.
const ZONE_MARGIN: i32 = 4;
/// The decoy archetype is this multiple of the station archetype.
const DECOY_SCALE: f64 = 3.0;
/// Scale of archetype means relative to unit per-feature noise.
const ARCHETYPE_SPREAD: f64 = 0.7;
const INFORMATIVE_FRACTION: f64 = 0.85;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCitySpec {
    pub rows: usize,
    pub cols: usize,
    pub n_features: usize,
    pub n_station_cells: usize,
    pub n_planted_zones: usize,
    /// Side length of each square planted zone, in cells.
    pub zone_side: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticCitySpec {
    fn default() -> Self {
        Self {
            rows: 60,
            cols: 60,
            n_features: 29,
            n_station_cells: 40,
            n_planted_zones: 3,
            zone_side: 10,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticCitySpec {
    pub fn validate(&self) -> Result<()> {
        let cells = self.rows * self.cols;
        let zone_area = self.zone_side * self.zone_side;
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid must have at least one row and column".into()));
        }
        if self.n_features == 0 {
            return Err(Error::Config("n_features must be >= 1".into()));
        }
        if self.n_station_cells == 0 {
            return Err(Error::Config("n_station_cells must be >= 1".into()));
        }
        if self.n_planted_zones > 0 && self.zone_side == 0 {
            return Err(Error::Config("zone_side must be >= 1".into()));
        }
        if self.zone_side > self.rows.min(self.cols) {
            return Err(Error::Config(format!(
                "zone_side {} does not fit a {}x{} grid",
                self.zone_side, self.rows, self.cols
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        if self.n_station_cells + self.n_planted_zones * zone_area >= cells {
            return Err(Error::Config(format!(
                "{} stations plus {} zones of {} cells do not fit {} cells",
                self.n_station_cells, self.n_planted_zones, zone_area, cells
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub grid: GridModel,
    pub features: FeatureTable<f64>,
    /// Planted-zone membership, one sorted id list per zone.
    pub zones: Vec<Vec<usize>>,
}

impl SyntheticCity {
    pub fn zone_cells(&self) -> std::collections::BTreeSet<usize> {
        self.zones.iter().flatten().copied().collect()
    }

    /// `zone_id,cell_id` manifest.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut out = String::from("zone_id,cell_id\n");
        for (z, cells) in self.zones.iter().enumerate() {
            for c in cells {
                out.push_str(&format!("{z},{c}\n"));
            }
        }
        write_atomic(path, out.as_bytes())
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<Vec<usize>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut zones: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let parse = |i: usize, name: &str| -> Result<usize> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    row,
                    column: name.into(),
                    message: "expected a non-negative integer".into(),
                })
        };
        zones.entry(parse(0, "zone_id")?).or_default().push(parse(1, "cell_id")?);
    }
    Ok(zones.into_values().collect())
}

pub fn generate_synthetic_city(spec: &SyntheticCitySpec) -> Result<SyntheticCity> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let (rows, cols) = (spec.rows as i32, spec.cols as i32);
    let side = spec.zone_side as i32;

    // Planted zones: non-overlapping squares with a station-free margin.
    let mut zone_origins: Vec<(i32, i32)> = Vec::with_capacity(spec.n_planted_zones);
    let mut attempts = 0;
    while zone_origins.len() < spec.n_planted_zones {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(format!(
                "could not place {} separated zones of side {}",
                spec.n_planted_zones, spec.zone_side
            )));
        }
        let r = rng.random_range(0..=rows - side);
        let c = rng.random_range(0..=cols - side);
        let clear = zone_origins.iter().all(|&(zr, zc)| {
            let gap_r = (r - zr).abs() - side;
            let gap_c = (c - zc).abs() - side;
            gap_r.max(gap_c) >= 2 * ZONE_MARGIN
        });
        if clear {
            zone_origins.push((r, c));
        }
    }
    let zone_of = |r: i32, c: i32| {
        zone_origins
            .iter()
            .position(|&(zr, zc)| r >= zr && r < zr + side && c >= zc && c < zc + side)
    };
    let near_zone = |r: i32, c: i32| {
        zone_origins.iter().any(|&(zr, zc)| {
            let dr = if r < zr { zr - r } else { (r - (zr + side - 1)).max(0) };
            let dc = if c < zc { zc - c } else { (c - (zc + side - 1)).max(0) };
            dr.max(dc) < ZONE_MARGIN
        })
    };

    let mut open: Vec<usize> = (0..spec.rows * spec.cols)
        .filter(|&i| !near_zone(i as i32 / cols, i as i32 % cols))
        .collect();
    if open.len() < spec.n_station_cells {
        return Err(Error::Config(format!(
            "only {} cells available for {} stations",
            open.len(),
            spec.n_station_cells
        )));
    }
    open.shuffle(&mut rng);
    let mut stations = open[..spec.n_station_cells].to_vec();
    stations.sort_unstable();
    let grid = GridModel::rectangular(spec.rows, spec.cols, &stations)?;

    // Archetype means in latent factor space. Index 0 is the station
    // archetype; background archetypes tile the rest of the grid as
    // Voronoi regions.
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut archetypes: Vec<Vec<f64>> = (0..=BACKGROUND_ARCHETYPES)
        .map(|_| (0..LATENT_FACTORS).map(|_| normal(&mut rng)).collect())
        .collect();
    // Trailing features carry no archetype signal, only noise.
    let n_informative = ((spec.n_features as f64 * INFORMATIVE_FRACTION).round() as usize).max(1);
    let loadings: Vec<Vec<f64>> = (0..spec.n_features)
        .map(|f| {
            (0..LATENT_FACTORS)
                .map(|_| {
                    let v = normal(&mut rng);
                    if f < n_informative {
                        v
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    // Disparate units per feature, removed again by z-scoring.
    let units: Vec<(f64, f64)> = (0..spec.n_features)
        .map(|_| (rng.random_range(0.5..20.0), rng.random_range(-10.0..100.0)))
        .collect();
    let sites: Vec<(f64, f64)> = (0..BACKGROUND_ARCHETYPES)
        .map(|_| (rng.random_range(0.0..rows as f64), rng.random_range(0.0..cols as f64)))
        .collect();

    let mut zones = vec![Vec::new(); spec.n_planted_zones];
    let mut assignment = vec![0usize; grid.len()];
    for cell in grid.cells() {
        assignment[cell.id] = if cell.has_station {
            0
        } else if let Some(z) = zone_of(cell.row, cell.col) {
            zones[z].push(cell.id);
            0
        } else {
            let (r, c) = (cell.row as f64 + 0.5, cell.col as f64 + 0.5);
            1 + sites
                .iter()
                .enumerate()
                .map(|(i, s)| (i, (s.0 - r).powi(2) + (s.1 - c).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
    }
    center_archetypes(&mut archetypes, &assignment);
    for a in archetypes.iter_mut() {
        a.iter_mut().for_each(|v| *v *= ARCHETYPE_SPREAD);
    }

    let mut values = Array2::<f64>::zeros((grid.len(), spec.n_features));
    for cell in grid.cells() {
        let u = &archetypes[assignment[cell.id]];
        for (f, load) in loadings.iter().enumerate() {
            let signal: f64 = load.iter().zip(u).map(|(a, b)| a * b).sum();
            let noise = if spec.noise_std > 0.0 {
                spec.noise_std * normal(&mut rng)
            } else {
                0.0
            };
            let (scale, offset) = units[f];
            values[[cell.id, f]] = scale * (signal + noise) + offset;
        }
    }

    let names = (0..spec.n_features).map(|f| format!("feature_{f:02}")).collect();
    let features = FeatureTable::new(values, names)?;
    debug_assert_eq!(grid.cell_size_m(), DEFAULT_CELL_SIZE_M);
    Ok(SyntheticCity {
        grid,
        features,
        zones,
    })
}

/// Turns the largest background archetype into a scaled copy of the
/// station archetype (the decoy), then shifts the second largest so the
/// area-weighted mean is the origin. After z-scoring, decoy cells point in
/// exactly the station direction.
fn center_archetypes(archetypes: &mut [Vec<f64>], assignment: &[usize]) {
    let mut counts = vec![0usize; archetypes.len()];
    for &a in assignment {
        counts[a] += 1;
    }
    let mut background: Vec<usize> = (1..archetypes.len()).filter(|&a| counts[a] > 0).collect();
    background.sort_by_key(|&a| (std::cmp::Reverse(counts[a]), a));
    let Some(&decoy) = background.first() else {
        return;
    };
    archetypes[decoy] = archetypes[0].iter().map(|v| DECOY_SCALE * v).collect();
    let Some(&filler) = background.get(1) else {
        return;
    };
    for k in 0..archetypes[0].len() {
        let rest: f64 = (0..archetypes.len())
            .filter(|&a| a != filler)
            .map(|a| counts[a] as f64 * archetypes[a][k])
            .sum();
        archetypes[filler][k] = -rest / counts[filler] as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    fn small(seed: u64) -> SyntheticCitySpec {
        SyntheticCitySpec {
            rows: 40,
            cols: 40,
            n_features: 6,
            n_station_cells: 12,
            n_planted_zones: 3,
            zone_side: 5,
            noise_std: 0.0,
            seed,
        }
    }

    #[test]
    fn zero_noise_station_rows_identical() {
        let city = generate_synthetic_city(&small(1)).unwrap();
        let stations = city.grid.station_ids();
        let first = city.features.values.row(stations[0]).to_owned();
        for &s in &stations {
            assert_eq!(city.features.values.row(s), first);
        }
        for z in city.zones.iter().flatten() {
            assert_eq!(city.features.values.row(*z), first);
            assert!(!city.grid.cell(*z).has_station);
        }
    }

    #[test]
    fn same_seed_bitwise_identical() {
        let mut spec = small(9);
        spec.noise_std = 0.5;
        let a = generate_synthetic_city(&spec).unwrap();
        let b = generate_synthetic_city(&spec).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.zones, b.zones);
    }

    #[test]
    fn planted_zones_are_disjoint_and_contiguous() {
        let city = generate_synthetic_city(&small(3)).unwrap();
        assert_eq!(city.zones.len(), 3);
        let mut seen = HashSet::new();
        for zone in &city.zones {
            assert_eq!(zone.len(), 25);
            for &c in zone {
                assert!(seen.insert(c), "cell {c} in two zones");
            }
            // BFS over 4-neighbour adjacency inside the zone
            let members: HashSet<usize> = zone.iter().copied().collect();
            let mut queue = VecDeque::from([zone[0]]);
            let mut reached = HashSet::from([zone[0]]);
            while let Some(id) = queue.pop_front() {
                let cell = city.grid.cell(id);
                for (dr, dc) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
                    if let Some(n) = city.grid.id_at(cell.row + dr, cell.col + dc) {
                        if members.contains(&n) && reached.insert(n) {
                            queue.push_back(n);
                        }
                    }
                }
            }
            assert_eq!(reached.len(), zone.len());
        }
    }

    #[test]
    fn zone_cells_clear_of_station_buffer() {
        let city = generate_synthetic_city(&small(4)).unwrap();
        for &z in city.zones.iter().flatten() {
            for s in city.grid.station_ids() {
                assert!(city.grid.cell(z).distance_to(city.grid.cell(s)) >= 250.0);
            }
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = small(0);
        spec.n_planted_zones = 100;
        assert!(matches!(generate_synthetic_city(&spec), Err(Error::Config(_))));
        let mut spec = small(0);
        spec.noise_std = -1.0;
        assert!(generate_synthetic_city(&spec).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let city = generate_synthetic_city(&small(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        city.write_manifest(&path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), city.zones);
    }
}
