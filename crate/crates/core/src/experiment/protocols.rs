use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::split_validation;
use super::train::{evaluate, train_model, EncodedSet, TrainConfig};
use super::{
    make_folds, metrics, AttributeSet, EvalReport, ExperimentError, FoldPlan, MeanStd,
    NeutralPolicy,
};
use crate::dataset::{ClassSet, Dataset, FeatureRecord};
use crate::fusion::TrainedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub report: EvalReport,
    pub test_ids: Vec<String>,
    pub train_size: usize,
    pub validation_size: usize,
    pub class_weights: Vec<f64>,
    pub best_epoch: usize,
}

/// Per-fold results plus mean and sample standard deviation across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub attrs: AttributeSet,
    pub folds: Vec<FoldOutcome>,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    /// Metrics of the confusion matrix summed over folds.
    pub pooled: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndoorInfluence {
    pub outdoor_only: CvReport,
    pub with_indoor: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalOutcome {
    pub policy: NeutralPolicy,
    pub report: EvalReport,
    pub train_size: usize,
    /// Training records removed because their id also occurs in the test set.
    pub excluded_overlap: usize,
    /// Test records not scored under the neutral policy.
    pub dropped_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrixCell {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Present on the diagonal, which is scored by cross-validation.
    pub accuracy_std: Option<f64>,
    pub macro_f1_std: Option<f64>,
}

/// Rows are training datasets, columns test datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub names: Vec<String>,
    pub cells: Vec<Vec<CrossMatrixCell>>,
}

fn labeled(records: &[FeatureRecord]) -> impl Iterator<Item = &FeatureRecord> {
    records.iter().filter(|r| r.label.is_some())
}

fn fold_targets(set: &EncodedSet, class_set: ClassSet) -> Result<Vec<usize>, ExperimentError> {
    set.labels
        .iter()
        .map(|&l| {
            class_set.index_of(l).ok_or_else(|| {
                ExperimentError::Incompatible(format!("label {l} outside {class_set:?} class set"))
            })
        })
        .collect()
}

/// Cross-validation over `set`; `extra_train` indices are appended to every
/// fold's training split and never tested.
fn cv_core(
    set: &EncodedSet,
    class_set: ClassSet,
    plan: &FoldPlan,
    attrs: AttributeSet,
    deep_dim: usize,
    tc: &TrainConfig,
    extra_train: &[usize],
) -> Result<CvReport, ExperimentError> {
    let folds = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let seed = tc.seed.wrapping_add(f as u64);
            let net = tc.net_config(deep_dim, attrs, class_set, seed);
            let mut train = fold.train.clone();
            train.extend_from_slice(extra_train);
            let outcome = train_model(set, &train, &fold.validation, class_set, &net, tc)?;
            let cm = evaluate(&outcome.model, set, &fold.test, class_set.labels())?;
            Ok(FoldOutcome {
                fold: f,
                report: metrics(&cm),
                test_ids: fold.test.iter().map(|&i| set.ids[i].clone()).collect(),
                train_size: train.len(),
                validation_size: fold.validation.len(),
                class_weights: outcome.class_weights.0,
                best_epoch: outcome.best_epoch,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let accuracy = MeanStd::of(&folds.iter().map(|f| f.report.accuracy).collect::<Vec<_>>());
    let macro_f1 = MeanStd::of(&folds.iter().map(|f| f.report.macro_f1).collect::<Vec<_>>());
    let mut pooled = folds[0].report.confusion.clone();
    for f in &folds[1..] {
        pooled.add(&f.report.confusion);
    }
    Ok(CvReport {
        attrs,
        folds,
        accuracy,
        macro_f1,
        pooled: metrics(&pooled),
    })
}

fn encode(
    records: &[FeatureRecord],
    deep_dim: usize,
    attrs: AttributeSet,
    class_set: ClassSet,
    tc: &TrainConfig,
) -> Result<EncodedSet, ExperimentError> {
    let shape = tc.net_config(deep_dim, attrs, class_set, 0);
    EncodedSet::encode(labeled(records), &shape)
}

/// Fold plan over the labeled records of `dataset`, in record order.
pub fn plan_for(dataset: &Dataset, tc: &TrainConfig) -> Result<FoldPlan, ExperimentError> {
    let class_set = dataset.class_set();
    let targets: Vec<usize> = labeled(&dataset.records)
        .map(|r| {
            let l = r.label.expect("labeled");
            class_set.index_of(l).ok_or_else(|| {
                ExperimentError::Incompatible(format!("label {l} outside {class_set:?} class set"))
            })
        })
        .collect::<Result<_, _>>()?;
    make_folds(&targets, tc.folds, tc.seed, tc.stratified)
}

/// k-fold cross-validation with class-weighted training and
/// best-validation checkpoint selection in every fold.
pub fn run_cv(
    dataset: &Dataset,
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<CvReport, ExperimentError> {
    let plan = plan_for(dataset, tc)?;
    run_cv_with_plan(dataset, &plan, attrs, tc)
}

pub fn run_cv_with_plan(
    dataset: &Dataset,
    plan: &FoldPlan,
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<CvReport, ExperimentError> {
    let class_set = dataset.class_set();
    let deep_dim = dataset.manifest.deep_dim;
    let set = encode(&dataset.records, deep_dim, attrs, class_set, tc)?;
    fold_targets(&set, class_set)?;
    cv_core(&set, class_set, plan, attrs, deep_dim, tc, &[])
}

/// The four attribute settings on one shared fold plan, so results are
/// paired fold by fold.
pub fn run_ablation_suite(
    dataset: &Dataset,
    tc: &TrainConfig,
) -> Result<Vec<(AttributeSet, CvReport)>, ExperimentError> {
    let plan = plan_for(dataset, tc)?;
    AttributeSet::ALL
        .iter()
        .map(|&attrs| Ok((attrs, run_cv_with_plan(dataset, &plan, attrs, tc)?)))
        .collect()
}

/// Round one cross-validates on the outdoor records alone; round two adds
/// every indoor record to each fold's training split. Both rounds test on
/// the same outdoor folds with the same seeds.
pub fn indoor_influence(
    outdoor: &Dataset,
    indoor: &Dataset,
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<IndoorInfluence, ExperimentError> {
    let class_set = outdoor.class_set();
    let deep_dim = outdoor.manifest.deep_dim;
    if indoor.manifest.deep_dim != deep_dim {
        return Err(ExperimentError::Incompatible(format!(
            "outdoor D={deep_dim}, indoor D={}",
            indoor.manifest.deep_dim
        )));
    }
    if indoor.class_set() != class_set {
        return Err(ExperimentError::Incompatible(
            "outdoor and indoor class sets differ".into(),
        ));
    }
    let plan = plan_for(outdoor, tc)?;
    let mut set = encode(&outdoor.records, deep_dim, attrs, class_set, tc)?;
    let n_outdoor = set.len();
    let outdoor_only = cv_core(&set, class_set, &plan, attrs, deep_dim, tc, &[])?;
    set.append(encode(&indoor.records, deep_dim, attrs, class_set, tc)?);
    fold_targets(&set, class_set)?;
    let extra: Vec<usize> = (n_outdoor..set.len()).collect();
    let with_indoor = cv_core(&set, class_set, &plan, attrs, deep_dim, tc, &extra)?;
    Ok(IndoorInfluence {
        outdoor_only,
        with_indoor,
    })
}

struct FullFit {
    model: TrainedModel,
    train_size: usize,
    excluded: usize,
}

/// Trains on all labeled records of `train` whose id is not in `exclude`,
/// holding out 20% for checkpoint selection.
fn fit_full(
    train: &Dataset,
    exclude: &HashSet<&str>,
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<FullFit, ExperimentError> {
    let class_set = train.class_set();
    let deep_dim = train.manifest.deep_dim;
    let kept: Vec<FeatureRecord> = labeled(&train.records)
        .filter(|r| !exclude.contains(r.image_id.as_str()))
        .cloned()
        .collect();
    let excluded = labeled(&train.records).count() - kept.len();
    let set = encode(&kept, deep_dim, attrs, class_set, tc)?;
    let targets = fold_targets(&set, class_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let (train_idx, val_idx) =
        split_validation(&targets, (0..set.len()).collect(), tc.stratified, &mut rng);
    let net = tc.net_config(deep_dim, attrs, class_set, tc.seed);
    let outcome = train_model(&set, &train_idx, &val_idx, class_set, &net, tc)?;
    Ok(FullFit {
        model: outcome.model,
        train_size: train_idx.len(),
        excluded,
    })
}

/// Trains one model on every labeled record of `dataset` (80/20 split for
/// checkpoint selection), e.g. for deployment on unlabeled images.
pub fn fit_dataset(
    dataset: &Dataset,
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<TrainedModel, ExperimentError> {
    Ok(fit_full(dataset, &HashSet::new(), attrs, tc)?.model)
}

fn score(
    model: &TrainedModel,
    test: &Dataset,
    policy: NeutralPolicy,
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<(EvalReport, usize), ExperimentError> {
    let scored = match policy {
        NeutralPolicy::DropNeutralFromTest => ClassSet::Binary.labels(),
        _ => test.class_set().labels(),
    };
    let set = encode(
        &test.records,
        test.manifest.deep_dim,
        attrs,
        test.class_set(),
        tc,
    )?;
    let indices: Vec<usize> = (0..set.len()).collect();
    let cm = evaluate(model, &set, &indices, scored)?;
    let dropped = set.len() - cm.total() as usize;
    Ok((metrics(&cm), dropped))
}

fn check_compatible(train: &Dataset, test: &Dataset) -> Result<(), ExperimentError> {
    if train.manifest.deep_dim != test.manifest.deep_dim {
        return Err(ExperimentError::Incompatible(format!(
            "train D={}, test D={}",
            train.manifest.deep_dim, test.manifest.deep_dim
        )));
    }
    Ok(())
}

/// Trains on the whole of `train` and scores on the whole of `test` under
/// the neutral-handling rule implied by the two label spaces. Training
/// records whose id also appears in `test` are excluded.
pub fn cross_dataset(
    train: &Dataset,
    test: &Dataset,
    policy: NeutralPolicy,
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<CrossEvalOutcome, ExperimentError> {
    check_compatible(train, test)?;
    let expected = NeutralPolicy::infer(train.class_set(), test.class_set());
    if policy != expected {
        return Err(ExperimentError::PolicyMismatch {
            given: policy,
            expected,
        });
    }
    let exclude: HashSet<&str> = test.records.iter().map(|r| r.image_id.as_str()).collect();
    let fit = fit_full(train, &exclude, attrs, tc)?;
    let (report, dropped_test) = score(&fit.model, test, policy, attrs, tc)?;
    Ok(CrossEvalOutcome {
        policy,
        report,
        train_size: fit.train_size,
        excluded_overlap: fit.excluded,
        dropped_test,
    })
}

/// All-against-all evaluation. Each row trains one model on its dataset
/// (excluding ids present in any other dataset) and scores it on every
/// other column; the diagonal is the dataset's own cross-validation.
pub fn cross_dataset_matrix(
    datasets: &[(String, Dataset)],
    attrs: AttributeSet,
    tc: &TrainConfig,
) -> Result<CrossMatrix, ExperimentError> {
    for (_, d) in &datasets[1..] {
        check_compatible(&datasets[0].1, d)?;
    }
    let mut cells = Vec::with_capacity(datasets.len());
    for (i, (_, train)) in datasets.iter().enumerate() {
        let exclude: HashSet<&str> = datasets
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, (_, d))| d.records.iter().map(|r| r.image_id.as_str()))
            .collect();
        let fit = if datasets.len() > 1 {
            Some(fit_full(train, &exclude, attrs, tc)?)
        } else {
            None
        };
        let mut row = Vec::with_capacity(datasets.len());
        for (j, (_, test)) in datasets.iter().enumerate() {
            if i == j {
                let cv = run_cv(train, attrs, tc)?;
                row.push(CrossMatrixCell {
                    accuracy: cv.accuracy.mean,
                    macro_f1: cv.macro_f1.mean,
                    accuracy_std: Some(cv.accuracy.std),
                    macro_f1_std: Some(cv.macro_f1.std),
                });
            } else {
                let policy = NeutralPolicy::infer(train.class_set(), test.class_set());
                let model = &fit.as_ref().expect("fit for off-diagonal").model;
                let (report, _) = score(model, test, policy, attrs, tc)?;
                row.push(CrossMatrixCell {
                    accuracy: report.accuracy,
                    macro_f1: report.macro_f1,
                    accuracy_std: None,
                    macro_f1_std: None,
                });
            }
        }
        cells.push(row);
    }
    Ok(CrossMatrix {
        names: datasets.iter().map(|(n, _)| n.clone()).collect(),
        cells,
    })
}
