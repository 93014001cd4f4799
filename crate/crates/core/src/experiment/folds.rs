use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Share of the non-test samples held out for checkpoint selection.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Index lists of one cross-validation iteration, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub folds: Vec<Fold>,
}

/// Partitions `0..labels.len()` into `k` test folds. The remaining samples
/// of each fold are split 80/20 into train and validation. With
/// `stratified`, every class is dealt round-robin across folds so each fold
/// holds `floor` or `ceil` of `n_c / k` samples of class `c`, and the inner
/// split is stratified as well.
pub fn make_folds(
    labels: &[usize],
    k: usize,
    seed: u64,
    stratified: bool,
) -> Result<FoldPlan, ExperimentError> {
    let n = labels.len();
    if k < 2 || n < k {
        return Err(ExperimentError::FoldCount { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = group_by_class(labels, 0..n);
    let order: Vec<usize> = if stratified {
        if let Some((&class, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
            return Err(ExperimentError::TooFewForStratification {
                class,
                count: members.len(),
                k,
            });
        }
        by_class
            .into_values()
            .flat_map(|mut members| {
                members.shuffle(&mut rng);
                members
            })
            .collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };

    let mut assignment = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let rest: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let (mut train, mut validation) = split_validation(labels, rest, stratified, &mut rng);
        train.sort_unstable();
        validation.sort_unstable();
        folds.push(Fold {
            test,
            train,
            validation,
        });
    }
    Ok(FoldPlan {
        k,
        seed,
        stratified,
        folds,
    })
}

fn group_by_class(
    labels: &[usize],
    indices: impl IntoIterator<Item = usize>,
) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in indices {
        by_class.entry(labels[i]).or_default().push(i);
    }
    by_class
}

fn validation_count(len: usize) -> usize {
    let n = (len as f64 * VALIDATION_FRACTION).round() as usize;
    n.min(len.saturating_sub(1))
}

/// Splits `indices` into (train, validation).
pub(crate) fn split_validation(
    labels: &[usize],
    mut indices: Vec<usize>,
    stratified: bool,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    if stratified {
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for (_, mut members) in group_by_class(labels, indices) {
            members.shuffle(rng);
            let n_val = validation_count(members.len());
            validation.extend_from_slice(&members[..n_val]);
            train.extend_from_slice(&members[n_val..]);
        }
        (train, validation)
    } else {
        indices.shuffle(rng);
        let n_val = validation_count(indices.len());
        let train = indices.split_off(n_val);
        (train, indices)
    }
}
