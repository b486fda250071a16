//! Regular square-cell tessellation of a study area.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CELL_SIZE_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: usize,
    pub row: i32,
    pub col: i32,
    pub centroid: (f64, f64),
    pub has_station: bool,
}

impl CellRecord {
    pub fn distance_to(&self, other: &CellRecord) -> f64 {
        distance(self.centroid, other.centroid)
    }
}

#[inline]
pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    cells: Vec<CellRecord>,
    cell_size_m: f64,
    origin: (f64, f64),
    index: HashMap<(i32, i32), usize>,
}

impl GridModel {
    /// Builds a grid from `(row, col, has_station)` triples; the position in
    /// the slice becomes the cell id.
    pub fn new(
        layout: &[(i32, i32, bool)],
        cell_size_m: f64,
        origin: (f64, f64),
    ) -> Result<Self> {
        if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
            return Err(Error::Config(format!(
                "cell size must be positive, got {cell_size_m}"
            )));
        }
        let mut index = HashMap::with_capacity(layout.len());
        let mut cells = Vec::with_capacity(layout.len());
        for (id, &(row, col, has_station)) in layout.iter().enumerate() {
            if index.insert((row, col), id).is_some() {
                return Err(Error::Structural {
                    id,
                    message: format!("duplicate grid position ({row}, {col})"),
                });
            }
            cells.push(CellRecord {
                id,
                row,
                col,
                centroid: centroid_of(row, col, cell_size_m, origin),
                has_station,
            });
        }
        Ok(Self {
            cells,
            cell_size_m,
            origin,
            index,
        })
    }

    /// Full `rows × cols` rectangle in row-major id order.
    pub fn rectangular(rows: usize, cols: usize, stations: &[usize]) -> Result<Self> {
        let mut layout: Vec<(i32, i32, bool)> = (0..rows * cols)
            .map(|i| ((i / cols) as i32, (i % cols) as i32, false))
            .collect();
        for &s in stations {
            let cell = layout.get_mut(s).ok_or_else(|| Error::Structural {
                id: s,
                message: "station id outside the grid".into(),
            })?;
            cell.2 = true;
        }
        Self::new(&layout, DEFAULT_CELL_SIZE_M, (0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[CellRecord] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &CellRecord {
        &self.cells[id]
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn id_at(&self, row: i32, col: i32) -> Option<usize> {
        self.index.get(&(row, col)).copied()
    }

    pub fn station_ids(&self) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|c| c.has_station)
            .map(|c| c.id)
            .collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.has_station).collect()
    }

    pub fn require_station(&self) -> Result<()> {
        if self.cells.iter().any(|c| c.has_station) {
            Ok(())
        } else {
            Err(Error::Config("grid has no station cells".into()))
        }
    }

    /// Axis-aligned square of a cell as a closed ring, counter-clockwise.
    pub fn cell_polygon(&self, id: usize) -> [(f64, f64); 5] {
        let c = &self.cells[id];
        let x0 = self.origin.0 + c.col as f64 * self.cell_size_m;
        let y0 = self.origin.1 + c.row as f64 * self.cell_size_m;
        let x1 = x0 + self.cell_size_m;
        let y1 = y0 + self.cell_size_m;
        [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    }

    /// Reads the `id,row,col,has_station` layout.
    pub fn read_csv(path: &Path, cell_size_m: f64, origin: (f64, f64)) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let expected = ["id", "row", "col", "has_station"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::format(
                path,
                format!("expected header {}", expected.join(",")),
            ));
        }
        let mut layout = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let id: usize = parse_field(&record, 0, "id", row_idx)?;
            if id != layout.len() {
                return Err(Error::Structural {
                    id: layout.len(),
                    message: format!("expected id {} but found {id}", layout.len()),
                });
            }
            let row: i32 = parse_field(&record, 1, "row", row_idx)?;
            let col: i32 = parse_field(&record, 2, "col", row_idx)?;
            let flag: u8 = parse_field(&record, 3, "has_station", row_idx)?;
            if flag > 1 {
                return Err(Error::Parse {
                    row: row_idx,
                    column: "has_station".into(),
                    message: format!("expected 0 or 1, got {flag}"),
                });
            }
            layout.push((row, col, flag == 1));
        }
        Self::new(&layout, cell_size_m, origin)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id,row,col,has_station\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.id,
                c.row,
                c.col,
                u8::from(c.has_station)
            ));
        }
        crate::io::write_atomic(path, out.as_bytes())
    }
}

fn centroid_of(row: i32, col: i32, cell_size_m: f64, origin: (f64, f64)) -> (f64, f64) {
    (
        origin.0 + (col as f64 + 0.5) * cell_size_m,
        origin.1 + (row as f64 + 0.5) * cell_size_m,
    )
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    row: usize,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(idx).unwrap_or("");
    raw.trim().parse().map_err(|e: T::Err| Error::Parse {
        row,
        column: name.to_string(),
        message: format!("'{raw}': {e}"),
    })
}
