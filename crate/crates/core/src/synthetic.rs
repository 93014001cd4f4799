//! Seeded synthetic feature datasets for protocol checks and demos.
//!
//! Deep features carry no class signal unless `deep_signal > 0`. When
//! `informative_attributes` is set, class `c` shifts SUN dimensions
//! `4c..4c+4` by +2 and fires detector category `100 + c`; every record
//! also carries a few random low-index distractor detections.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{ClassSet, Dataset, DatasetId, FeatureRecord, Scene, SUN_DIM};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n: usize,
    pub deep_dim: usize,
    pub class_set: ClassSet,
    pub informative_attributes: bool,
    pub deep_signal: f32,
    pub seed: u64,
    pub dataset_id: DatasetId,
    pub scene: Scene,
    pub id_prefix: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 600,
            deep_dim: 32,
            class_set: ClassSet::Ternary,
            informative_attributes: true,
            deep_signal: 0.0,
            seed: 0,
            dataset_id: DatasetId::Custom,
            scene: Scene::Outdoor,
            id_prefix: "syn".into(),
        }
    }
}

pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.class_set.n_classes();
    let mut classes: Vec<usize> = (0..cfg.n).map(|i| i % k).collect();
    classes.shuffle(&mut rng);
    let records = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut noise = || -> f32 { StandardNormal.sample(&mut rng) };
            let mut deep: Vec<f32> = (0..cfg.deep_dim).map(|_| noise()).collect();
            if cfg.deep_signal > 0.0 {
                deep[c % cfg.deep_dim] += cfg.deep_signal;
            }
            let mut sun: Vec<f32> = (0..SUN_DIM).map(|_| 0.5 * noise()).collect();
            let mut yolo = BTreeMap::new();
            for _ in 0..3 {
                yolo.insert(rng.random_range(0..64u16), rng.random_range(0.1f32..0.9));
            }
            if cfg.informative_attributes {
                for v in &mut sun[4 * c..4 * c + 4] {
                    *v += 2.0;
                }
                yolo.insert(100 + c as u16, rng.random_range(0.6f32..1.0));
            }
            let geo = Some((
                rng.random_range(41.65..42.02),
                rng.random_range(-87.94..-87.52),
            ));
            FeatureRecord {
                image_id: format!("{}-{i:05}", cfg.id_prefix),
                deep,
                sun,
                yolo,
                geo,
                label: Some(cfg.class_set.label_at(c)),
                dataset_id: cfg.dataset_id,
                scene: cfg.scene,
            }
        })
        .collect();
    Dataset::new(cfg.dataset_id, cfg.class_set, cfg.deep_dim, records)
}
