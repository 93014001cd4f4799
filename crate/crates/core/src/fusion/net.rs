use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassWeights, FusionError, FusionNetConfig};

/// Row-parallelism kicks in above this many multiply-adds per layer.
const PAR_WORK: usize = 1 << 16;

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    /// `W a + b`, visiting only the nonzero entries of `a`.
    fn apply(&self, nonzero: &[(usize, f64)]) -> Vec<f64> {
        let eval = |o: usize| {
            let row = self.row(o);
            nonzero
                .iter()
                .fold(self.bias[o], |acc, &(j, a)| acc + row[j] * a)
        };
        if self.outputs * nonzero.len() >= PAR_WORK {
            (0..self.outputs).into_par_iter().map(eval).collect()
        } else {
            (0..self.outputs).map(eval).collect()
        }
    }

    /// `W^T delta`.
    fn transpose_apply(&self, delta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (acc, &w) in out.iter_mut().zip(self.row(o)) {
                *acc += w * d;
            }
        }
        out
    }
}

/// Weights and biases of every layer, input side first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionNetParams {
    pub layers: Vec<DenseLayer>,
}

impl FusionNetParams {
    pub fn zeros(config: &FusionNetConfig) -> Self {
        let sizes = config.layer_sizes();
        FusionNetParams {
            layers: sizes
                .windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        FusionNetParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Every parameter in storage order: per layer, weights then bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable slices in storage order, for element-wise updates.
    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    #[cfg(test)]
    fn add_assign(&mut self, other: &FusionNetParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }
}

/// He-normal weights (std `sqrt(2 / fan_in)`), zero biases, seeded from the
/// config.
pub fn init_params(config: &FusionNetConfig) -> Result<FusionNetParams, FusionError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = FusionNetParams::zeros(config);
    for layer in &mut params.layers {
        let std = (2.0 / layer.inputs as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for w in &mut layer.weights {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Activations retained by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer as (index, value) of its nonzero entries; entry
    /// `l` feeds layer `l`.
    inputs: Vec<Vec<(usize, f64)>>,
    /// Dense post-rectifier activations of the hidden layers.
    hidden: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

fn nonzero(v: &[f64]) -> Vec<(usize, f64)> {
    v.iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .map(|(j, &a)| (j, a))
        .collect()
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn forward(
    params: &FusionNetParams,
    x: &[f64],
) -> Result<(Vec<f64>, ForwardCache), FusionError> {
    if x.len() != params.input_dim() {
        return Err(FusionError::Dimension {
            what: "input",
            expected: params.input_dim(),
            actual: x.len(),
        });
    }
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut hidden = Vec::with_capacity(last);
    inputs.push(nonzero(x));
    let mut logits = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = layer.apply(&inputs[l]);
        if l == last {
            logits = z;
        } else {
            for v in &mut z {
                *v = v.max(0.0);
            }
            inputs.push(nonzero(&z));
            hidden.push(z);
        }
    }
    let probabilities = softmax(&logits);
    let cache = ForwardCache {
        inputs,
        hidden,
        probabilities: probabilities.clone(),
    };
    Ok((probabilities, cache))
}

/// Weighted cross-entropy `-w[y] * ln p[y]`.
pub fn loss(probabilities: &[f64], label: usize, weights: &ClassWeights) -> f64 {
    -weights.get(label) * probabilities[label].max(f64::MIN_POSITIVE).ln()
}

/// Index of the most probable class; ties go to the lowest index.
pub fn predict(params: &FusionNetParams, x: &[f64]) -> Result<usize, FusionError> {
    let (p, _) = forward(params, x)?;
    Ok(argmax(&p))
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Per-layer output deltas `dL/dz` for one sample, input side first.
fn deltas(
    params: &FusionNetParams,
    cache: &ForwardCache,
    label: usize,
    weights: &ClassWeights,
) -> Vec<Vec<f64>> {
    let n = params.layers.len();
    let w = weights.get(label);
    let mut out = vec![Vec::new(); n];
    out[n - 1] = cache
        .probabilities
        .iter()
        .enumerate()
        .map(|(c, &p)| w * (p - if c == label { 1.0 } else { 0.0 }))
        .collect();
    // The input layer never needs a delta of its own.
    for l in (1..n).rev() {
        let mut d = params.layers[l].transpose_apply(&out[l]);
        for (v, &a) in d.iter_mut().zip(&cache.hidden[l - 1]) {
            if a <= 0.0 {
                *v = 0.0;
            }
        }
        out[l - 1] = d;
    }
    out
}

/// Gradient of the weighted cross-entropy of a single sample.
pub fn backward(
    params: &FusionNetParams,
    cache: &ForwardCache,
    label: usize,
    weights: &ClassWeights,
) -> FusionNetParams {
    let ds = deltas(params, cache, label, weights);
    let mut grads = params.zeros_like();
    for (l, g) in grads.layers.iter_mut().enumerate() {
        accumulate_layer(g, &[(&cache.inputs[l], &ds[l])]);
    }
    grads
}

/// A sample's sparse layer input paired with the layer's delta.
type SampleTerm<'a> = (&'a Vec<(usize, f64)>, &'a Vec<f64>);

/// Adds `sum_s delta_s (x) input_s` into `grad`, samples in order.
fn accumulate_layer(grad: &mut DenseLayer, samples: &[SampleTerm<'_>]) {
    let inputs = grad.inputs;
    let work: usize = samples.iter().map(|(x, _)| x.len()).sum::<usize>() * grad.outputs;
    let row_update = |(o, row): (usize, &mut [f64])| {
        for (x, d) in samples {
            let d = d[o];
            if d == 0.0 {
                continue;
            }
            for &(j, a) in x.iter() {
                row[j] += d * a;
            }
        }
    };
    if work >= PAR_WORK {
        grad.weights
            .par_chunks_mut(inputs)
            .enumerate()
            .for_each(row_update);
    } else {
        grad.weights
            .chunks_mut(inputs)
            .enumerate()
            .for_each(row_update);
    }
    for (_, d) in samples {
        for (b, &v) in grad.bias.iter_mut().zip(d.iter()) {
            *b += v;
        }
    }
}

/// Mean gradient and mean loss over a batch. Samples are processed in
/// parallel but reduced in index order, so the result is deterministic.
pub fn batch_gradient(
    params: &FusionNetParams,
    inputs: &[&[f64]],
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<(FusionNetParams, f64), FusionError> {
    assert_eq!(inputs.len(), labels.len(), "inputs/labels length");
    let per_sample: Vec<(ForwardCache, Vec<Vec<f64>>, f64)> = inputs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &y)| {
            let (p, cache) = forward(params, x)?;
            let ds = deltas(params, &cache, y, weights);
            Ok((cache, ds, loss(&p, y, weights)))
        })
        .collect::<Result<_, FusionError>>()?;
    let mut grads = params.zeros_like();
    for (l, g) in grads.layers.iter_mut().enumerate() {
        let samples: Vec<_> = per_sample
            .iter()
            .map(|(cache, ds, _)| (&cache.inputs[l], &ds[l]))
            .collect();
        accumulate_layer(g, &samples);
    }
    let n = inputs.len().max(1) as f64;
    grads.scale(1.0 / n);
    let mean_loss = per_sample.iter().map(|(_, _, l)| l).sum::<f64>() / n;
    Ok((grads, mean_loss))
}

/// Sums per-sample gradients; only used to cross-check [`batch_gradient`].
#[cfg(test)]
pub(crate) fn mean_of_sample_gradients(
    params: &FusionNetParams,
    inputs: &[&[f64]],
    labels: &[usize],
    weights: &ClassWeights,
) -> FusionNetParams {
    let mut acc = params.zeros_like();
    for (x, &y) in inputs.iter().zip(labels) {
        let (_, cache) = forward(params, x).unwrap();
        acc.add_assign(&backward(params, &cache, y, weights));
    }
    acc.scale(1.0 / inputs.len() as f64);
    acc
}
