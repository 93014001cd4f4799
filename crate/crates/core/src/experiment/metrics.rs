use serde::{Deserialize, Serialize};

use crate::dataset::SentimentLabel;

/// Counts of (true label, predicted label). Rows are the scored label space
/// of the test set; columns are the model's output labels, which may
/// include labels absent from the rows (a neutral column on a binary test
/// set only ever holds errors).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_labels: Vec<SentimentLabel>,
    pub predicted_labels: Vec<SentimentLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(true_labels: &[SentimentLabel], predicted_labels: &[SentimentLabel]) -> Self {
        ConfusionMatrix {
            true_labels: true_labels.to_vec(),
            predicted_labels: predicted_labels.to_vec(),
            counts: vec![vec![0; predicted_labels.len()]; true_labels.len()],
        }
    }

    /// Square matrix from nested counts over the same labels.
    pub fn from_counts(labels: &[SentimentLabel], counts: Vec<Vec<u64>>) -> Self {
        ConfusionMatrix {
            true_labels: labels.to_vec(),
            predicted_labels: labels.to_vec(),
            counts,
        }
    }

    /// Records one prediction; returns false when the true label is not
    /// scored by this matrix.
    pub fn record(&mut self, truth: SentimentLabel, predicted: SentimentLabel) -> bool {
        let (Some(r), Some(c)) = (
            self.true_labels.iter().position(|&l| l == truth),
            self.predicted_labels.iter().position(|&l| l == predicted),
        ) else {
            return false;
        };
        self.counts[r][c] += 1;
        true
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    fn column_of(&self, label: SentimentLabel) -> Option<usize> {
        self.predicted_labels.iter().position(|&l| l == label)
    }

    /// Correct predictions: true label equals predicted label.
    pub fn correct(&self) -> u64 {
        self.true_labels
            .iter()
            .enumerate()
            .filter_map(|(r, &l)| self.column_of(l).map(|c| self.counts[r][c]))
            .sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.true_labels, other.true_labels, "row labels differ");
        assert_eq!(
            self.predicted_labels, other.predicted_labels,
            "column labels differ"
        );
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SentimentLabel,
    pub support: u64,
    /// Percentages; a zero denominator yields 0.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores of one test run. All rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: 0.0,
                std: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class precision/recall/F1 and macro F1 over the row labels.
pub fn metrics(confusion: &ConfusionMatrix) -> EvalReport {
    let per_class: Vec<ClassMetrics> = confusion
        .true_labels
        .iter()
        .enumerate()
        .map(|(r, &label)| {
            let support = confusion.row_total(r);
            let (tp, predicted) = match confusion.column_of(label) {
                Some(c) => (
                    confusion.counts[r][c],
                    confusion.counts.iter().map(|row| row[c]).sum(),
                ),
                None => (0, 0),
            };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label,
                support,
                precision: 100.0 * precision,
                recall: 100.0 * recall,
                f1: 100.0 * f1,
            }
        })
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64
    };
    EvalReport {
        accuracy: 100.0 * ratio(confusion.correct(), confusion.total()),
        macro_f1,
        per_class,
        confusion: confusion.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentLabel::*;

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_counts(
            &[Negative, Neutral, Positive],
            vec![vec![3, 0, 0], vec![0, 4, 0], vec![0, 0, 5]],
        );
        let r = metrics(&cm);
        assert_eq!(r.accuracy, 100.0);
        assert_eq!(r.macro_f1, 100.0);
    }

    #[test]
    fn half_right_binary() {
        let cm = ConfusionMatrix::from_counts(&[Negative, Positive], vec![vec![5, 5], vec![5, 5]]);
        let r = metrics(&cm);
        assert_eq!(r.accuracy, 50.0);
        assert!(r.per_class.iter().all(|m| (m.f1 - 50.0).abs() < 1e-12));
    }

    #[test]
    fn empty_row_scores_zero() {
        let cm = ConfusionMatrix::from_counts(
            &[Negative, Neutral, Positive],
            vec![vec![2, 1, 0], vec![0, 0, 0], vec![0, 1, 3]],
        );
        let r = metrics(&cm);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[1].support, 0);
    }

    #[test]
    fn neutral_column_counts_as_error_on_binary_rows() {
        let mut cm = ConfusionMatrix::new(&[Negative, Positive], &[Negative, Neutral, Positive]);
        assert!(cm.record(Positive, Neutral));
        assert!(cm.record(Positive, Positive));
        assert!(!cm.record(Neutral, Positive));
        let r = metrics(&cm);
        assert_eq!(cm.total(), 2);
        assert_eq!(r.accuracy, 50.0);
        assert_eq!(r.per_class[1].recall, 50.0);
        assert_eq!(r.per_class[1].precision, 100.0);
    }

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[70.0, 70.0, 70.0]);
        assert_eq!((s.mean, s.std), (70.0, 0.0));
        let s = MeanStd::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
    }
}
