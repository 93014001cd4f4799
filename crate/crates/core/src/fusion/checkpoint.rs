//! Model checkpoint file.
//!
//! Layout: magic `SFCK`, `u32` version, `u32` header length, a JSON header
//! (network config, class set, per-layer offsets, standardizer offsets),
//! then a flat blob of little-endian `f64` values. Offsets count reals from
//! the start of the blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseLayer, FusionError, FusionNetConfig, FusionNetParams, Standardizer};
use crate::dataset::ClassSet;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SFCK";
const CHECKPOINT_VERSION: u32 = 1;

/// A trained network plus everything needed to apply it to raw records.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: FusionNetConfig,
    pub class_set: ClassSet,
    pub params: FusionNetParams,
    pub standardizer: Option<Standardizer>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    inputs: usize,
    outputs: usize,
    weight_offset: usize,
    bias_offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: FusionNetConfig,
    class_set: ClassSet,
    layers: Vec<LayerEntry>,
    /// Offset of the standardizer means; inverse deviations follow.
    standardizer_offset: Option<usize>,
    n_reals: usize,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &TrainedModel) -> Result<(), FusionError> {
    let mut blob: Vec<f64> = Vec::with_capacity(model.params.n_params());
    let mut layers = Vec::new();
    for l in &model.params.layers {
        let weight_offset = blob.len();
        blob.extend_from_slice(&l.weights);
        let bias_offset = blob.len();
        blob.extend_from_slice(&l.bias);
        layers.push(LayerEntry {
            inputs: l.inputs,
            outputs: l.outputs,
            weight_offset,
            bias_offset,
        });
    }
    let standardizer_offset = model.standardizer.as_ref().map(|s| {
        let off = blob.len();
        blob.extend_from_slice(&s.mean);
        blob.extend_from_slice(&s.inv_std);
        off
    });
    let header = Header {
        config: model.config.clone(),
        class_set: model.class_set,
        layers,
        standardizer_offset,
        n_reals: blob.len(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| FusionError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + header.len() + blob.len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in blob {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel, FusionError> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| FusionError::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad("unsupported version"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| FusionError::Checkpoint(e.to_string()))?;
    let body = &bytes[header_end..];
    if body.len() != header.n_reals * 8 {
        return Err(bad("blob length does not match header"));
    }
    let blob: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let slice = |off: usize, len: usize| -> Result<Vec<f64>, FusionError> {
        blob.get(off..off + len)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| bad("offset out of range"))
    };
    let mut layers = Vec::with_capacity(header.layers.len());
    for e in &header.layers {
        layers.push(DenseLayer {
            inputs: e.inputs,
            outputs: e.outputs,
            weights: slice(e.weight_offset, e.inputs * e.outputs)?,
            bias: slice(e.bias_offset, e.outputs)?,
        });
    }
    let params = FusionNetParams { layers };
    let sizes = header.config.layer_sizes();
    let shape_ok = params.layers.len() == sizes.len() - 1
        && params
            .layers
            .iter()
            .zip(sizes.windows(2))
            .all(|(l, w)| l.inputs == w[0] && l.outputs == w[1]);
    if !shape_ok {
        return Err(bad("layer shapes do not match config"));
    }
    let dim = header.config.input_dim();
    let standardizer = match header.standardizer_offset {
        Some(off) => Some(Standardizer {
            mean: slice(off, dim)?,
            inv_std: slice(off + dim, dim)?,
        }),
        None => None,
    };
    Ok(TrainedModel {
        config: header.config,
        class_set: header.class_set,
        params,
        standardizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let config = FusionNetConfig {
            deep_dim: 9,
            use_sun: false,
            use_yolo: false,
            hidden: [6, 5, 4],
            n_classes: 3,
            seed: 99,
        };
        let mut params = init_params(&config).unwrap();
        params.layers[1].bias[2] = -0.0;
        params.layers[0].weights[0] = f64::MIN_POSITIVE / 4.0;
        let model = TrainedModel {
            config,
            class_set: ClassSet::Ternary,
            params,
            standardizer: Some(Standardizer {
                mean: (0..9).map(|i| i as f64 / 7.0).collect(),
                inv_std: vec![0.5; 9],
            }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sfck");
        save_checkpoint(&path, &model).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let bits = |m: &TrainedModel| m.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&model));
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        fs::write(&path, b"NOPE00000000").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
