use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttributeSet, ConfusionMatrix, ExperimentError};
use crate::dataset::{ClassSet, FeatureRecord, SentimentLabel};
use crate::fusion::{
    batch_gradient, forward, fuse, init_params, AdamConfig, AdamState, ClassWeights,
    FusionNetConfig, Standardizer, TrainedModel,
};

/// Training hyperparameters shared by every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Hidden widths; `None` selects the reference architecture for the
    /// dataset's deep dimension.
    pub hidden: Option<[usize; 3]>,
    pub seed: u64,
    pub folds: usize,
    pub stratified: bool,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            hidden: None,
            seed: 0,
            folds: 5,
            stratified: true,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn net_config(
        &self,
        deep_dim: usize,
        attrs: AttributeSet,
        class_set: ClassSet,
        seed: u64,
    ) -> FusionNetConfig {
        let mut cfg = FusionNetConfig::standard(
            deep_dim,
            attrs.use_sun(),
            attrs.use_yolo(),
            class_set.n_classes(),
            seed,
        );
        if let Some(hidden) = self.hidden {
            cfg.hidden = hidden;
        }
        cfg
    }
}

/// Fused (unstandardized) inputs of the labeled records of a dataset.
#[derive(Debug, Clone)]
pub struct EncodedSet {
    pub ids: Vec<String>,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<SentimentLabel>,
}

impl EncodedSet {
    /// Fuses every labeled record; unlabeled records are skipped.
    pub fn encode<'a>(
        records: impl IntoIterator<Item = &'a FeatureRecord>,
        config: &FusionNetConfig,
    ) -> Result<Self, ExperimentError> {
        let labeled: Vec<&FeatureRecord> =
            records.into_iter().filter(|r| r.label.is_some()).collect();
        let inputs = labeled
            .par_iter()
            .map(|r| fuse(r, config))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EncodedSet {
            ids: labeled.iter().map(|r| r.image_id.clone()).collect(),
            inputs,
            labels: labeled.iter().map(|r| r.label.expect("filtered")).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn append(&mut self, other: EncodedSet) {
        self.ids.extend(other.ids);
        self.inputs.extend(other.inputs);
        self.labels.extend(other.labels);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub class_weights: ClassWeights,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

fn prepared<'a>(standardizer: Option<&Standardizer>, x: &'a [f64]) -> Cow<'a, [f64]> {
    match standardizer {
        Some(s) => {
            let mut v = x.to_vec();
            s.apply(&mut v);
            Cow::Owned(v)
        }
        None => Cow::Borrowed(x),
    }
}

fn predict_index(model: &TrainedModel, x: &[f64]) -> Result<usize, ExperimentError> {
    let x = prepared(model.standardizer.as_ref(), x);
    let (p, _) = forward(&model.params, &x)?;
    Ok(crate::fusion::argmax(&p))
}

fn accuracy(
    model: &TrainedModel,
    set: &EncodedSet,
    indices: &[usize],
) -> Result<f64, ExperimentError> {
    let correct = indices
        .par_iter()
        .map(|&i| {
            let pred = predict_index(model, &set.inputs[i])?;
            Ok(usize::from(model.class_set.label_at(pred) == set.labels[i]))
        })
        .collect::<Result<Vec<usize>, ExperimentError>>()?
        .into_iter()
        .sum::<usize>();
    Ok(100.0 * correct as f64 / indices.len().max(1) as f64)
}

/// Trains a fusion network on `train` and keeps the epoch with the best
/// validation accuracy (the last epoch when `validation` is empty).
///
/// Class weights come from the class counts of `train` alone. The
/// standardizer, when enabled, is fit on `train` alone.
pub fn train_model(
    set: &EncodedSet,
    train: &[usize],
    validation: &[usize],
    class_set: ClassSet,
    net: &FusionNetConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome, ExperimentError> {
    if train.is_empty() {
        return Err(ExperimentError::EmptySplit("training"));
    }
    let targets: Vec<usize> = set
        .labels
        .iter()
        .map(|&l| class_set.index_of(l).unwrap_or(usize::MAX))
        .collect();
    if let Some(&bad) = train.iter().find(|&&i| targets[i] == usize::MAX) {
        return Err(ExperimentError::Incompatible(format!(
            "training label {} outside {:?} class set",
            set.labels[bad], class_set
        )));
    }
    let mut counts = vec![0usize; class_set.n_classes()];
    for &i in train {
        counts[targets[i]] += 1;
    }
    let class_weights = ClassWeights::from_counts(&counts)?;

    let standardizer = tc.standardize.then(|| {
        Standardizer::fit(
            net.input_dim(),
            train.iter().map(|&i| set.inputs[i].as_slice()),
        )
    });
    let mut model = TrainedModel {
        config: net.clone(),
        class_set,
        params: init_params(net)?,
        standardizer,
    };
    let mut adam = AdamState::new(&model.params, tc.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(net.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order = train.to_vec();
    let mut best: Option<(f64, usize, crate::fusion::FusionNetParams)> = None;
    let mut history = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(tc.batch_size.max(1)) {
            let rows: Vec<Cow<[f64]>> = batch
                .iter()
                .map(|&i| prepared(model.standardizer.as_ref(), &set.inputs[i]))
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_ref()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let (grads, loss) = batch_gradient(&model.params, &refs, &labels, &class_weights)?;
            adam.step(&mut model.params, &grads);
            loss_sum += loss * batch.len() as f64;
        }
        let validation_accuracy = if validation.is_empty() {
            f64::NAN
        } else {
            accuracy(&model, set, validation)?
        };
        history.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            validation_accuracy,
        });
        if !validation.is_empty()
            && best
                .as_ref()
                .is_none_or(|(acc, _, _)| validation_accuracy > *acc)
        {
            best = Some((validation_accuracy, epoch, model.params.clone()));
        }
    }

    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => tc.epochs.saturating_sub(1),
    };
    Ok(TrainOutcome {
        model,
        class_weights,
        best_epoch,
        history,
    })
}

/// Confusion matrix of `model` on `indices`, scoring only records whose
/// true label is in `scored`.
pub fn evaluate(
    model: &TrainedModel,
    set: &EncodedSet,
    indices: &[usize],
    scored: &[SentimentLabel],
) -> Result<ConfusionMatrix, ExperimentError> {
    let predictions = indices
        .par_iter()
        .map(|&i| predict_index(model, &set.inputs[i]))
        .collect::<Result<Vec<usize>, ExperimentError>>()?;
    let mut cm = ConfusionMatrix::new(scored, model.class_set.labels());
    for (&i, &p) in indices.iter().zip(&predictions) {
        cm.record(set.labels[i], model.class_set.label_at(p));
    }
    Ok(cm)
}
