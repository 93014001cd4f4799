//! Dataset model: labels, feature records, the on-disk manifest/record
//! format, volunteer grade aggregation and vote-consensus subsets.

mod consensus;
mod format;
mod grades;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use consensus::{consensus_subset, ConsensusSubset};
pub use format::{
    read_manifest, read_records, write_dataset, write_manifest, write_records, ClassCounts,
    Dataset, DatasetManifest, FORMAT_VERSION, RECORD_MAGIC,
};
pub use grades::{
    aggregate_grades, aggregate_per_image, dedupe_grades, read_grades_csv, write_grades_csv,
    GradeRecord, ImageLabel,
};

/// Number of scene attributes in the SUN descriptor.
pub const SUN_DIM: usize = 102;
/// Number of detector categories in the YOLO attribute vector.
pub const YOLO_DIM: usize = 9418;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no grades for image")]
    NoGrades,
    #[error("grade {0} out of range 1..=5")]
    GradeOutOfRange(u8),
    #[error("malformed vote record for image {image_id}: {detail}")]
    MalformedVotes { image_id: String, detail: String },
    #[error("consensus level {0} not in 3..=5")]
    ConsensusLevel(usize),
    #[error("record {ordinal}: {detail}")]
    Record { ordinal: usize, detail: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("bad magic or version in {0}")]
    Magic(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
}

impl DatasetError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        DatasetError::Io {
            context: context.into(),
            source,
        }
    }

    fn record(ordinal: usize, detail: impl Into<String>) -> Self {
        DatasetError::Record {
            ordinal,
            detail: detail.into(),
        }
    }
}

/// Aggregated sentiment of an image. Ordering follows polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            SentimentLabel::Negative => 0,
            SentimentLabel::Neutral => 1,
            SentimentLabel::Positive => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        SentimentLabel::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "neg" | "n" => Ok(SentimentLabel::Negative),
            "neutral" | "neu" => Ok(SentimentLabel::Neutral),
            "positive" | "pos" | "p" => Ok(SentimentLabel::Positive),
            _ => Err(DatasetError::UnknownLabel(s.to_string())),
        }
    }
}

/// Label space of a dataset: binary polarity or polarity plus neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassSet {
    Binary,
    Ternary,
}

impl ClassSet {
    pub fn labels(self) -> &'static [SentimentLabel] {
        match self {
            ClassSet::Binary => &[SentimentLabel::Negative, SentimentLabel::Positive],
            ClassSet::Ternary => &SentimentLabel::ALL,
        }
    }

    pub fn n_classes(self) -> usize {
        self.labels().len()
    }

    /// Class index of `label` in this set's output layer, if representable.
    pub fn index_of(self, label: SentimentLabel) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }

    pub fn label_at(self, index: usize) -> SentimentLabel {
        self.labels()[index]
    }

    pub fn contains(self, label: SentimentLabel) -> bool {
        self.index_of(label).is_some()
    }

    pub fn from_n_classes(n: usize) -> Option<Self> {
        match n {
            2 => Some(ClassSet::Binary),
            3 => Some(ClassSet::Ternary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    OutdoorSent,
    DeepSent,
    ImageSentiment,
    FlickrKat,
    InstagramKat,
    Custom,
}

impl DatasetId {
    pub(crate) fn code(self) -> u8 {
        match self {
            DatasetId::OutdoorSent => 0,
            DatasetId::DeepSent => 1,
            DatasetId::ImageSentiment => 2,
            DatasetId::FlickrKat => 3,
            DatasetId::InstagramKat => 4,
            DatasetId::Custom => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DatasetId::OutdoorSent,
            1 => DatasetId::DeepSent,
            2 => DatasetId::ImageSentiment,
            3 => DatasetId::FlickrKat,
            4 => DatasetId::InstagramKat,
            5 => DatasetId::Custom,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scene {
    Indoor,
    #[default]
    Outdoor,
}

/// One image's precomputed inputs: backbone features, SUN scene attributes
/// and sparse detector confidences, plus optional geolocation and label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub image_id: String,
    pub deep: Vec<f32>,
    pub sun: Vec<f32>,
    /// Detector category index to confidence; absent categories are zero.
    pub yolo: BTreeMap<u16, f32>,
    /// `(lat, lon)` in degrees.
    pub geo: Option<(f64, f64)>,
    pub label: Option<SentimentLabel>,
    pub dataset_id: DatasetId,
    pub scene: Scene,
}

impl FeatureRecord {
    /// Checks the record-local invariants; `ordinal` is used for error context.
    pub fn validate(&self, ordinal: usize) -> Result<(), DatasetError> {
        if self.sun.len() != SUN_DIM {
            return Err(DatasetError::record(
                ordinal,
                format!("sun dimension {} (expected {SUN_DIM})", self.sun.len()),
            ));
        }
        if let Some(i) = self
            .deep
            .iter()
            .chain(&self.sun)
            .position(|v| !v.is_finite())
        {
            return Err(DatasetError::record(
                ordinal,
                format!("non-finite feature value at position {i}"),
            ));
        }
        for (&idx, &conf) in &self.yolo {
            if usize::from(idx) >= YOLO_DIM {
                return Err(DatasetError::record(
                    ordinal,
                    format!("yolo index {idx} >= {YOLO_DIM}"),
                ));
            }
            if !(0.0..=1.0).contains(&conf) {
                return Err(DatasetError::record(
                    ordinal,
                    format!("yolo confidence {conf} outside [0,1] at index {idx}"),
                ));
            }
        }
        if let Some((lat, lon)) = self.geo {
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(DatasetError::record(
                    ordinal,
                    format!("geolocation ({lat}, {lon}) out of range"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_set_indexing() {
        assert_eq!(ClassSet::Binary.index_of(SentimentLabel::Positive), Some(1));
        assert_eq!(ClassSet::Binary.index_of(SentimentLabel::Neutral), None);
        assert_eq!(
            ClassSet::Ternary.index_of(SentimentLabel::Positive),
            Some(2)
        );
        assert_eq!(ClassSet::Ternary.label_at(1), SentimentLabel::Neutral);
    }

    #[test]
    fn label_parsing() {
        assert_eq!(
            "Positive".parse::<SentimentLabel>().unwrap(),
            SentimentLabel::Positive
        );
        assert_eq!(
            "neu".parse::<SentimentLabel>().unwrap(),
            SentimentLabel::Neutral
        );
        assert!("happy".parse::<SentimentLabel>().is_err());
    }
}
