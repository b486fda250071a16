//! CSV and GeoJSON artifacts. Coordinates stay in the grid's planar frame.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::allocation::AllocationResult;
use crate::consensus::ConsensusZone;
use crate::error::Result;
use crate::grid::GridModel;
use crate::io::{fmt_f64, write_atomic};
use crate::Scalar;

/// Declared on every feature collection.
pub const FRAME: &str = "planar-metres";

fn ring(points: &[(f64, f64)]) -> Value {
    Value::Array(points.iter().map(|&(x, y)| json!([x, y])).collect())
}

fn collection(layer: &str, features: Vec<Value>) -> Value {
    json!({
        "type": "FeatureCollection",
        "name": layer,
        "properties": { "frame": FRAME },
        "features": features,
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values always serialise");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Selected cell polygons with `{id, weight, rank}`.
pub fn allocation_geojson<T: Scalar>(grid: &GridModel, result: &AllocationResult<T>) -> Value {
    let features = result
        .selected_ids
        .iter()
        .zip(&result.selected_weights)
        .enumerate()
        .map(|(i, (&id, w))| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring(&grid.cell_polygon(id))] },
                "properties": { "id": id, "weight": w.as_f64(), "rank": i + 1, "frame": FRAME },
            })
        })
        .collect();
    collection("allocation", features)
}

/// Existing station cells as a separate layer.
pub fn stations_geojson(grid: &GridModel) -> Value {
    let features = grid
        .station_ids()
        .into_iter()
        .map(|id| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring(&grid.cell_polygon(id))] },
                "properties": { "id": id, "frame": FRAME },
            })
        })
        .collect();
    collection("stations", features)
}

/// `zone_id,diversity,size,medoid_id,member_ids` with `;`-joined members.
pub fn consensus_csv(zones: &[ConsensusZone]) -> String {
    let mut out = String::from("zone_id,diversity,size,medoid_id,member_ids\n");
    for z in zones {
        let members: Vec<String> = z.member_ids.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            z.zone_id,
            z.diversity,
            z.size,
            z.medoid_id,
            members.join(";")
        );
    }
    out
}

/// Convex hull of the member cell footprints plus one point per medoid.
pub fn consensus_geojson(grid: &GridModel, zones: &[ConsensusZone]) -> Value {
    let mut features = Vec::with_capacity(zones.len() * 2);
    for z in zones {
        let corners: Vec<(f64, f64)> = z
            .member_ids
            .iter()
            .flat_map(|&id| grid.cell_polygon(id)[..4].to_vec())
            .collect();
        let mut hull = convex_hull(&corners);
        hull.push(hull[0]);
        let labels: Vec<&str> = z.selected_by.iter().map(String::as_str).collect();
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Polygon", "coordinates": [ring(&hull)] },
            "properties": {
                "kind": "zone",
                "zone_id": z.zone_id,
                "diversity": z.diversity,
                "size": z.size,
                "medoid_id": z.medoid_id,
                "selected_by": labels,
                "frame": FRAME,
            },
        }));
        let (x, y) = grid.cell(z.medoid_id).centroid;
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [x, y] },
            "properties": { "kind": "medoid", "zone_id": z.zone_id, "id": z.medoid_id, "frame": FRAME },
        }));
    }
    collection("consensus", features)
}

/// Counter-clockwise hull without the closing point (monotone chain).
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Key/value report lines, one per entry.
pub fn text_summary(title: &str, entries: &[(&str, String)]) -> String {
    let mut out = format!("{title}\n");
    for (k, v) in entries {
        let _ = writeln!(out, "{k}: {v}");
    }
    out
}

/// Square matrix with a header row and a leading label column.
pub fn matrix_csv(labels: &[String], values: &ndarray::Array2<f64>) -> String {
    let mut out = String::from("dim");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(values.rows()) {
        out.push_str(l);
        for v in row {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}
