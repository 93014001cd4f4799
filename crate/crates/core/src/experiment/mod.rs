//! Evaluation protocols: stratified k-fold cross-validation with an inner
//! train/validation split, attribute ablations, the indoor-influence
//! experiment and cross-dataset generalization.

mod folds;
mod metrics;
mod protocols;
mod report;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassSet, DatasetError};
use crate::fusion::FusionError;

pub use folds::{make_folds, Fold, FoldPlan};
pub use metrics::{metrics, ClassMetrics, ConfusionMatrix, EvalReport, MeanStd};
pub use protocols::{
    cross_dataset, cross_dataset_matrix, fit_dataset, indoor_influence, plan_for,
    run_ablation_suite, run_cv, run_cv_with_plan, CrossEvalOutcome, CrossMatrix, CrossMatrixCell,
    CvReport, FoldOutcome, IndoorInfluence,
};
pub use report::{render_ablation, render_cross_matrix, render_cv, render_indoor};
pub use train::{evaluate, train_model, EncodedSet, EpochLog, TrainConfig, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("class {class} has {count} samples, fewer than k={k} folds")]
    TooFewForStratification {
        class: usize,
        count: usize,
        k: usize,
    },
    #[error("need at least 2 folds and at least k samples (k={k}, n={n})")]
    FoldCount { k: usize, n: usize },
    #[error("incompatible feature spaces: {0}")]
    Incompatible(String),
    #[error("neutral policy {given:?} does not match class sets (expected {expected:?})")]
    PolicyMismatch {
        given: NeutralPolicy,
        expected: NeutralPolicy,
    },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Which semantic blocks are concatenated to the deep features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttributeSet {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "sun")]
    Sun,
    #[serde(rename = "yolo")]
    Yolo,
    #[serde(rename = "sun+yolo")]
    SunYolo,
}

impl AttributeSet {
    pub const ALL: [AttributeSet; 4] = [
        AttributeSet::None,
        AttributeSet::Sun,
        AttributeSet::Yolo,
        AttributeSet::SunYolo,
    ];

    pub fn use_sun(self) -> bool {
        matches!(self, AttributeSet::Sun | AttributeSet::SunYolo)
    }

    pub fn use_yolo(self) -> bool {
        matches!(self, AttributeSet::Yolo | AttributeSet::SunYolo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeSet::None => "none",
            AttributeSet::Sun => "sun",
            AttributeSet::Yolo => "yolo",
            AttributeSet::SunYolo => "sun+yolo",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            AttributeSet::None => "without attributes",
            AttributeSet::Sun => "with SUN attributes",
            AttributeSet::Yolo => "with YOLO attributes",
            AttributeSet::SunYolo => "YOLO + SUN attributes",
        }
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributeSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AttributeSet::None),
            "sun" => Ok(AttributeSet::Sun),
            "yolo" => Ok(AttributeSet::Yolo),
            "sun+yolo" | "yolo+sun" => Ok(AttributeSet::SunYolo),
            other => Err(format!("unknown attribute setting {other:?}")),
        }
    }
}

/// How the neutral class is handled when train and test label spaces differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeutralPolicy {
    /// Binary training set, ternary test set: neutral test records are dropped.
    DropNeutralFromTest,
    /// Ternary model, binary test set: any neutral prediction is an error.
    NeutralPredictionIsError,
    None,
}

impl NeutralPolicy {
    pub fn infer(train: ClassSet, test: ClassSet) -> Self {
        match (train, test) {
            (ClassSet::Binary, ClassSet::Ternary) => NeutralPolicy::DropNeutralFromTest,
            (ClassSet::Ternary, ClassSet::Binary) => NeutralPolicy::NeutralPredictionIsError,
            _ => NeutralPolicy::None,
        }
    }
}
