use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentifuse_core::dataset::{DatasetId, FeatureRecord, Scene, SUN_DIM};
use sentifuse_core::fusion::{
    backward, forward, fuse, init_params, ClassWeights, FusionNetConfig, FusionNetParams,
};

/// Straightforward dense re-implementation of the weighted cross-entropy.
fn oracle_loss(params: &FusionNetParams, x: &[f64], label: usize, w: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let n = params.layers.len();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = layer.bias.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            for (i, ai) in a.iter().enumerate() {
                *zo += layer.weights[o * layer.inputs + i] * ai;
            }
        }
        if l + 1 < n {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        a = z;
    }
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    -w[label] * (a[label] - lse)
}

fn record(rng: &mut ChaCha8Rng, deep_dim: usize) -> FeatureRecord {
    let mut yolo = BTreeMap::new();
    for _ in 0..4 {
        yolo.insert(rng.random_range(0..9418u16), rng.random_range(0.05f32..1.0));
    }
    FeatureRecord {
        image_id: "g".into(),
        deep: (0..deep_dim)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect(),
        sun: (0..SUN_DIM)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect(),
        yolo,
        geo: None,
        label: None,
        dataset_id: DatasetId::Custom,
        scene: Scene::Outdoor,
    }
}

fn param(p: &mut FusionNetParams, l: usize, is_bias: bool, k: usize) -> &mut f64 {
    if is_bias {
        &mut p.layers[l].bias[k]
    } else {
        &mut p.layers[l].weights[k]
    }
}

fn check(config: &FusionNetConfig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(config).unwrap();
    for layer in &mut params.layers {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let x = fuse(&record(&mut rng, config.deep_dim), config).unwrap();
    let label = rng.random_range(0..config.n_classes);
    let w: Vec<f64> = (0..config.n_classes)
        .map(|_| rng.random_range(0.5..2.5))
        .collect();
    let weights = ClassWeights(w.clone());
    let (_, cache) = forward(&params, &x).unwrap();
    let grads = backward(&params, &cache, label, &weights);

    let h = 1e-4;
    let nonzero: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    for l in 0..params.layers.len() {
        let (inputs, outputs) = (params.layers[l].inputs, params.layers[l].outputs);
        let mut coords: Vec<(bool, usize)> = (0..outputs).map(|o| (true, o)).collect();
        if l == 0 {
            for _ in 0..60 {
                let o = rng.random_range(0..outputs);
                let i = if rng.random_bool(0.8) {
                    nonzero[rng.random_range(0..nonzero.len())]
                } else {
                    rng.random_range(0..inputs)
                };
                coords.push((false, o * inputs + i));
            }
        } else {
            coords.extend((0..inputs * outputs).map(|k| (false, k)));
        }
        for (is_bias, k) in coords {
            let orig = *param(&mut params, l, is_bias, k);
            *param(&mut params, l, is_bias, k) = orig + h;
            let up = oracle_loss(&params, &x, label, &w);
            *param(&mut params, l, is_bias, k) = orig - h;
            let down = oracle_loss(&params, &x, label, &w);
            *param(&mut params, l, is_bias, k) = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = if is_bias {
                grads.layers[l].bias[k]
            } else {
                grads.layers[l].weights[k]
            };
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            let rel = (numeric - analytic).abs() / denom;
            assert!(
                rel < 1e-4 || (numeric - analytic).abs() < 1e-9,
                "layer {l} {} {k}: analytic {analytic} numeric {numeric} ({config:?})",
                if is_bias { "bias" } else { "weight" }
            );
        }
    }
}

#[test]
fn backprop_matches_finite_differences_for_every_block_combination() {
    let mut case = 0;
    for use_sun in [false, true] {
        for use_yolo in [false, true] {
            for n_classes in [2, 3] {
                for seed in 0..3 {
                    let config = FusionNetConfig {
                        deep_dim: 7,
                        use_sun,
                        use_yolo,
                        hidden: [5, 4, 3],
                        n_classes,
                        seed: 100 + seed,
                    };
                    check(&config, case);
                    case += 1;
                }
            }
        }
    }
    assert_eq!(case, 24);
}
