use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ClusterResult, GeoError, GeoPoint, IncomeReport};
use crate::dataset::{ClassSet, SentimentLabel};

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    image_id: String,
    lat: f64,
    lon: f64,
    label: String,
}

/// Reads `image_id,lat,lon,label` rows (with header).
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<GeoPoint>, GeoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: PointRow = row?;
        let label: SentimentLabel = row.label.parse().map_err(|_| GeoError::Point {
            image_id: row.image_id.clone(),
            detail: format!("unknown label {:?}", row.label),
        })?;
        let p = GeoPoint {
            image_id: row.image_id,
            lat: row.lat,
            lon: row.lon,
            label,
        };
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_points_csv<W: Write>(writer: W, points: &[GeoPoint]) -> Result<(), GeoError> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(PointRow {
            image_id: p.image_id.clone(),
            lat: p.lat,
            lon: p.lon,
            label: p.label.as_str().to_string(),
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `image_id,lat,lon,label,cluster`; noise points get `noise`.
pub fn write_clusters_csv<W: Write>(
    writer: W,
    points: &[GeoPoint],
    result: &ClusterResult,
) -> Result<(), GeoError> {
    if points.len() != result.assignments.len() {
        return Err(GeoError::Parameter(format!(
            "{} points but {} assignments",
            points.len(),
            result.assignments.len()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["image_id", "lat", "lon", "label", "cluster"])?;
    for (p, a) in points.iter().zip(&result.assignments) {
        let cluster = a.map_or_else(|| "noise".to_string(), |c| c.to_string());
        w.write_record([
            p.image_id.as_str(),
            &p.lat.to_string(),
            &p.lon.to_string(),
            p.label.as_str(),
            &cluster,
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Plain comma-separated count matrix, one line per grid row starting
/// with the southernmost.
pub fn write_grid_csv<W: Write>(writer: W, grid: &[Vec<u32>]) -> Result<(), GeoError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for row in grid {
        w.write_record(row.iter().map(u32::to_string))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn render_income_report(report: &IncomeReport) -> String {
    let mut out = String::new();
    let labels = ClassSet::Ternary.labels();
    let _ = write!(out, "{:<10}{:>8}", "income", "images");
    for l in labels {
        let _ = write!(out, "{:>18}", l.as_str());
    }
    out.push('\n');
    for row in &report.rows {
        let _ = write!(out, "{:<10}{:>8}", row.bucket.as_str(), row.total());
        for (c, p) in row.counts.iter().zip(&row.percentages) {
            let _ = write!(out, "{:>18}", format!("{c} ({p:.2}%)"));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "unassigned: {}", report.unassigned);
    let _ = writeln!(out, "missing income: {}", report.missing_income);
    out
}
