//! City-scale analysis of geolocated, sentiment-labeled images: footprint
//! filtering, density clustering, income buckets and heatmap grids.

mod dbscan;
mod index;
mod io;
mod polygon;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassSet, SentimentLabel};

pub use dbscan::{dbscan, ClusterResult};
pub use index::LayerIndex;
pub use io::{
    read_points_csv, render_income_report, write_clusters_csv, write_grid_csv, write_points_csv,
};
pub use polygon::{point_in_polygon, BBox, Feature, Polygon, PolygonLayer, Ring};

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("invalid ring: {0}")]
    InvalidRing(String),
    #[error("geojson: {0}")]
    GeoJson(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("point {image_id}: {detail}")]
    Point { image_id: String, detail: String },
    #[error("{0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub image_id: String,
    pub lat: f64,
    pub lon: f64,
    pub label: SentimentLabel,
}

impl GeoPoint {
    pub fn validate(&self) -> Result<(), GeoError> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(GeoError::Point {
                image_id: self.image_id.clone(),
                detail: format!("coordinates ({}, {}) out of range", self.lat, self.lon),
            });
        }
        Ok(())
    }
}

/// Drops points that fall inside (or on the edge of) any footprint.
/// Order of the remaining points is preserved.
pub fn filter_outdoor(points: &[GeoPoint], footprints: &PolygonLayer) -> Vec<GeoPoint> {
    let index = LayerIndex::new(footprints);
    let keep: Vec<bool> = points
        .par_iter()
        .map(|p| index.first_containing(p.lat, p.lon).is_none())
        .collect();
    points
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| p.clone())
        .collect()
}

/// Clusters only the points carrying `label`. The result's assignments
/// follow the order of those points within `points`.
pub fn cluster_class(
    points: &[GeoPoint],
    label: SentimentLabel,
    eps: f64,
    min_pts: usize,
) -> Result<(Vec<GeoPoint>, ClusterResult), GeoError> {
    let selected: Vec<GeoPoint> = points
        .iter()
        .filter(|p| p.label == label)
        .cloned()
        .collect();
    let coords: Vec<(f64, f64)> = selected.iter().map(|p| (p.lat, p.lon)).collect();
    let result = dbscan(&coords, eps, min_pts)?;
    Ok((selected, result))
}

/// Default clustering parameters per class: `(eps in degrees, min_pts)`.
pub fn default_cluster_params(label: SentimentLabel) -> (f64, usize) {
    match label {
        SentimentLabel::Negative => (0.005, 10),
        SentimentLabel::Neutral | SentimentLabel::Positive => (0.0045, 50),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncomeBucket {
    Low,
    Medium,
    High,
}

impl IncomeBucket {
    pub const ALL: [IncomeBucket; 3] =
        [IncomeBucket::Low, IncomeBucket::Medium, IncomeBucket::High];

    pub fn as_str(self) -> &'static str {
        match self {
            IncomeBucket::Low => "low",
            IncomeBucket::Medium => "medium",
            IncomeBucket::High => "high",
        }
    }
}

impl fmt::Display for IncomeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Median household income in dollars per year: below 50,000 is low,
/// 50,000 through 100,000 (inclusive) medium, above that high.
pub fn income_bucket(median_income: f64) -> IncomeBucket {
    if median_income < 50_000.0 {
        IncomeBucket::Low
    } else if median_income <= 100_000.0 {
        IncomeBucket::Medium
    } else {
        IncomeBucket::High
    }
}

/// Index of the first tract (layer order) containing each point; `None`
/// when no tract does.
pub fn assign_tracts(points: &[GeoPoint], tracts: &PolygonLayer) -> Vec<Option<usize>> {
    let index = LayerIndex::new(tracts);
    points
        .par_iter()
        .map(|p| index.first_containing(p.lat, p.lon))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeRow {
    pub bucket: IncomeBucket,
    /// Point counts in `ClassSet::Ternary` order.
    pub counts: [usize; 3],
    /// Share of each class within the bucket, in percent.
    pub percentages: [f64; 3],
}

impl IncomeRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeReport {
    pub income_attribute: String,
    pub rows: Vec<IncomeRow>,
    /// Points outside every tract.
    pub unassigned: usize,
    /// Points in tracts whose income attribute is missing or not numeric.
    pub missing_income: usize,
}

/// Per-bucket class counts and class percentages. Unassigned points and
/// tracts without an income value are left out of the percentages.
pub fn income_report(
    points: &[GeoPoint],
    tracts: &PolygonLayer,
    income_attribute: &str,
) -> IncomeReport {
    let assignment = assign_tracts(points, tracts);
    let mut counts = [[0usize; 3]; 3];
    let mut unassigned = 0;
    let mut missing_income = 0;
    for (p, tract) in points.iter().zip(&assignment) {
        let Some(t) = tract else {
            unassigned += 1;
            continue;
        };
        let Some(income) = tracts.features[*t].number(income_attribute) else {
            missing_income += 1;
            continue;
        };
        let class = ClassSet::Ternary
            .index_of(p.label)
            .expect("ternary covers every label");
        counts[income_bucket(income) as usize][class] += 1;
    }
    let rows = IncomeBucket::ALL
        .iter()
        .map(|&bucket| {
            let c = counts[bucket as usize];
            let total: usize = c.iter().sum();
            let pct = |n: usize| {
                if total == 0 {
                    0.0
                } else {
                    100.0 * n as f64 / total as f64
                }
            };
            IncomeRow {
                bucket,
                counts: c,
                percentages: [pct(c[0]), pct(c[1]), pct(c[2])],
            }
        })
        .collect();
    IncomeReport {
        income_attribute: income_attribute.to_string(),
        rows,
        unassigned,
        missing_income,
    }
}

/// Per-class point counts on a regular grid. Row 0 is the southernmost
/// band and column 0 the westernmost; points on the north or east edge of
/// the box land in the last row or column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub bbox: BBox,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    /// `counts[class][row][col]`, classes in `ClassSet::Ternary` order.
    pub counts: Vec<Vec<Vec<u32>>>,
    /// Points outside the box.
    pub outside: usize,
}

impl HeatmapGrid {
    pub fn class_grid(&self, label: SentimentLabel) -> &Vec<Vec<u32>> {
        &self.counts[ClassSet::Ternary
            .index_of(label)
            .expect("ternary covers every label")]
    }

    pub fn total(&self) -> u64 {
        self.counts
            .iter()
            .flatten()
            .flatten()
            .map(|&c| u64::from(c))
            .sum()
    }
}

/// Smallest box containing every point, or `None` when there are none.
pub fn points_bbox(points: &[GeoPoint]) -> Option<BBox> {
    let mut b = BBox::empty();
    for p in points {
        b.extend(p.lat, p.lon);
    }
    (!b.is_empty()).then_some(b)
}

pub fn heatmap_grid(
    points: &[GeoPoint],
    cell_size: f64,
    bbox: BBox,
) -> Result<HeatmapGrid, GeoError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(GeoError::Parameter(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    if bbox.is_empty() {
        return Err(GeoError::Parameter("empty bounding box".into()));
    }
    let span = |lo: f64, hi: f64| (((hi - lo) / cell_size).ceil() as usize).max(1);
    let rows = span(bbox.min_lat, bbox.max_lat);
    let cols = span(bbox.min_lon, bbox.max_lon);
    let mut counts = vec![vec![vec![0u32; cols]; rows]; 3];
    let mut outside = 0;
    for p in points {
        if !bbox.contains(p.lat, p.lon) {
            outside += 1;
            continue;
        }
        let r = (((p.lat - bbox.min_lat) / cell_size).floor() as usize).min(rows - 1);
        let c = (((p.lon - bbox.min_lon) / cell_size).floor() as usize).min(cols - 1);
        let class = ClassSet::Ternary
            .index_of(p.label)
            .expect("ternary covers every label");
        counts[class][r][c] += 1;
    }
    Ok(HeatmapGrid {
        bbox,
        cell_size,
        rows,
        cols,
        counts,
        outside,
    })
}
