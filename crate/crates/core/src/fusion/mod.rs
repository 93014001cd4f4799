//! Dense fusion classifier over concatenated deep + semantic features.
//!
//! Input is `[deep | sun | yolo]` (each block optional), followed by three
//! rectified dense layers and a softmax output layer. Gradients are exact
//! backpropagation of the class-weighted cross-entropy.

mod adam;
mod checkpoint;
mod net;
mod standardize;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureRecord, SUN_DIM, YOLO_DIM};

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, TrainedModel, CHECKPOINT_MAGIC};
pub use net::{
    argmax, backward, batch_gradient, forward, init_params, loss, predict, softmax, DenseLayer,
    ForwardCache, FusionNetParams,
};
pub use standardize::Standardizer;

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("{what} dimension mismatch: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// Shape of the fusion network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionNetConfig {
    pub deep_dim: usize,
    pub use_sun: bool,
    pub use_yolo: bool,
    /// Widths of the three rectified hidden layers.
    pub hidden: [usize; 3],
    pub n_classes: usize,
    pub seed: u64,
}

impl FusionNetConfig {
    /// The reference architecture: a first hidden layer of 1024 units for
    /// compact backbones (D <= 1024) and 2048 otherwise, then 1024 and 24.
    pub fn standard(
        deep_dim: usize,
        use_sun: bool,
        use_yolo: bool,
        n_classes: usize,
        seed: u64,
    ) -> Self {
        let first = if deep_dim <= 1024 { 1024 } else { 2048 };
        FusionNetConfig {
            deep_dim,
            use_sun,
            use_yolo,
            hidden: [first, 1024, 24],
            n_classes,
            seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.deep_dim
            + if self.use_sun { SUN_DIM } else { 0 }
            + if self.use_yolo { YOLO_DIM } else { 0 }
    }

    pub fn layer_sizes(&self) -> [usize; 5] {
        [
            self.input_dim(),
            self.hidden[0],
            self.hidden[1],
            self.hidden[2],
            self.n_classes,
        ]
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !(2..=3).contains(&self.n_classes) {
            return Err(FusionError::Config(format!(
                "n_classes must be 2 or 3, got {}",
                self.n_classes
            )));
        }
        if self.hidden.contains(&0) {
            return Err(FusionError::Config(
                "hidden layers must be non-empty".into(),
            ));
        }
        if self.input_dim() == 0 {
            return Err(FusionError::Config("empty input".into()));
        }
        Ok(())
    }
}

/// Concatenates the enabled feature blocks of `record` as
/// `[deep | sun | yolo]`, densifying the sparse detector map.
pub fn fuse(record: &FeatureRecord, config: &FusionNetConfig) -> Result<Vec<f64>, FusionError> {
    let mut out = vec![0.0; config.input_dim()];
    fuse_into(record, config, &mut out)?;
    Ok(out)
}

pub fn fuse_into(
    record: &FeatureRecord,
    config: &FusionNetConfig,
    out: &mut [f64],
) -> Result<(), FusionError> {
    if record.deep.len() != config.deep_dim {
        return Err(FusionError::Dimension {
            what: "deep",
            expected: config.deep_dim,
            actual: record.deep.len(),
        });
    }
    if out.len() != config.input_dim() {
        return Err(FusionError::Dimension {
            what: "input",
            expected: config.input_dim(),
            actual: out.len(),
        });
    }
    let mut pos = 0;
    for (o, &v) in out.iter_mut().zip(&record.deep) {
        *o = f64::from(v);
    }
    pos += record.deep.len();
    if config.use_sun {
        if record.sun.len() != SUN_DIM {
            return Err(FusionError::Dimension {
                what: "sun",
                expected: SUN_DIM,
                actual: record.sun.len(),
            });
        }
        for (o, &v) in out[pos..pos + SUN_DIM].iter_mut().zip(&record.sun) {
            *o = f64::from(v);
        }
        pos += SUN_DIM;
    }
    if config.use_yolo {
        let block = &mut out[pos..pos + YOLO_DIM];
        block.fill(0.0);
        for (&idx, &conf) in &record.yolo {
            let idx = usize::from(idx);
            if idx >= YOLO_DIM {
                return Err(FusionError::Dimension {
                    what: "yolo index",
                    expected: YOLO_DIM,
                    actual: idx,
                });
            }
            block[idx] = f64::from(conf);
        }
    }
    Ok(())
}

/// Per-class loss multipliers, `w_c = N / (K * n_c)`.
///
/// Minority classes get larger weights and `sum_c n_c * w_c = N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(n_classes: usize) -> Self {
        ClassWeights(vec![1.0; n_classes])
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self, FusionError> {
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(FusionError::EmptyClass(c));
        }
        let total: usize = counts.iter().sum();
        let k = counts.len() as f64;
        Ok(ClassWeights(
            counts
                .iter()
                .map(|&n| total as f64 / (k * n as f64))
                .collect(),
        ))
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetId, Scene};
    use std::collections::BTreeMap;

    fn record(deep_dim: usize) -> FeatureRecord {
        FeatureRecord {
            image_id: "r".into(),
            deep: vec![1.5; deep_dim],
            sun: vec![0.25; SUN_DIM],
            yolo: BTreeMap::from([(3, 0.7)]),
            geo: None,
            label: None,
            dataset_id: DatasetId::Custom,
            scene: Scene::Outdoor,
        }
    }

    #[test]
    fn fused_lengths() {
        let full = FusionNetConfig::standard(2048, true, true, 3, 0);
        assert_eq!(fuse(&record(2048), &full).unwrap().len(), 11568);
        let bare = FusionNetConfig::standard(1024, false, false, 2, 0);
        assert_eq!(fuse(&record(1024), &bare).unwrap(), vec![1.5; 1024]);
        assert_eq!(bare.hidden, [1024, 1024, 24]);
        assert_eq!(full.hidden, [2048, 1024, 24]);
    }

    #[test]
    fn yolo_block_is_densified() {
        let cfg = FusionNetConfig {
            deep_dim: 2,
            use_sun: false,
            use_yolo: true,
            hidden: [4, 4, 4],
            n_classes: 3,
            seed: 0,
        };
        let x = fuse(&record(2), &cfg).unwrap();
        let block = &x[2..];
        assert_eq!(block.len(), YOLO_DIM);
        assert!((block[3] - 0.7f32 as f64).abs() == 0.0);
        assert_eq!(block.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn fuse_rejects_wrong_deep_dim() {
        let cfg = FusionNetConfig::standard(2048, true, false, 3, 0);
        assert!(matches!(
            fuse(&record(1024), &cfg),
            Err(FusionError::Dimension { what: "deep", .. })
        ));
    }

    #[test]
    fn class_weights_upweight_minority() {
        let w = ClassWeights::from_counts(&[259, 1187, 504]).unwrap();
        assert!(w.get(0) > w.get(2) && w.get(2) > w.get(1));
        let mass: f64 = [259.0, 1187.0, 504.0]
            .iter()
            .zip(&w.0)
            .map(|(n, w)| n * w)
            .sum();
        assert!((mass - 1950.0).abs() < 1e-9);
        assert!(matches!(
            ClassWeights::from_counts(&[3, 0]),
            Err(FusionError::EmptyClass(1))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = FusionNetConfig::standard(8, false, false, 4, 0);
        assert!(cfg.validate().is_err());
        cfg.n_classes = 2;
        assert!(cfg.validate().is_ok());
        cfg.hidden[1] = 0;
        assert!(cfg.validate().is_err());
    }
}
