//! Evaluation metrics: confusion matrices over `C+1` verdict classes (the
//! extra row/column is OOD), accuracy, balanced accuracy, and a numerically
//! safe softmax.
//!
//! Balanced accuracy comes in two conventions. `AssumeZeroWhenAbsent`
//! averages over all `C+1` recalls and scores the OOD recall as 0 whenever
//! the evaluation set contains no true OOD sample, so detectors are not
//! rewarded for an OOD class that never occurs. `InDistOnly` averages the C
//! in-distribution recalls and ignores the OOD row entirely; it exists for
//! calibrating thresholds on validation sets that have no OOD samples.

use crate::error::{Error, Result};
use crate::types::{LabelVector, Prediction};

/// How balanced accuracy treats the OOD row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodConvention {
    /// Mean over `C+1` recalls; an empty true-OOD row contributes recall 0
    /// but still counts in the denominator.
    AssumeZeroWhenAbsent,
    /// Mean over the C in-distribution recalls only.
    InDistOnly,
}

/// Softmax of one row of logits at the given temperature, computed with
/// max-subtraction so large logits cannot overflow.
pub fn softmax(logits_row: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "softmax temperature must be positive and finite, got {temperature}"
        )));
    }
    if logits_row.is_empty() {
        return Err(Error::invalid("softmax input must be non-empty"));
    }
    if logits_row.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax input must be finite"));
    }
    let max = logits_row
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
    let exps: Vec<f64> = logits_row
        .iter()
        .map(|&v| (v / temperature - max).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `(C+1) x (C+1)` count matrix; row = true class, column = predicted class,
/// index `C` = OOD on both axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>, // row-major, (C+1)^2 entries
}

impl ConfusionMatrix {
    /// Build from raw counts (row-major, `(C+1)^2` entries).
    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::invalid("confusion matrix needs at least one class"));
        }
        let side = n_classes + 1;
        if counts.len() != side * side {
            return Err(Error::invalid(format!(
                "expected {} counts for {n_classes} classes, got {}",
                side * side,
                counts.len()
            )));
        }
        Ok(Self { n_classes, counts })
    }

    /// Number of in-distribution classes C (the matrix is `(C+1)`-square).
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Count of samples with true index `i` predicted as index `j`
    /// (index C = OOD).
    pub fn count(&self, i: usize, j: usize) -> u64 {
        let side = self.n_classes + 1;
        self.counts[i * side + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of true samples of index `i`.
    pub fn row_sum(&self, i: usize) -> u64 {
        let side = self.n_classes + 1;
        self.counts[i * side..(i + 1) * side].iter().sum()
    }

    /// Number of predictions of index `j`.
    pub fn col_sum(&self, j: usize) -> u64 {
        let side = self.n_classes + 1;
        (0..side).map(|i| self.counts[i * side + j]).sum()
    }

    /// Sum of the diagonal (correct verdicts, including correct OOD).
    pub fn trace(&self) -> u64 {
        let side = self.n_classes + 1;
        (0..side).map(|i| self.counts[i * side + i]).sum()
    }
}

/// Tally predictions against ground truth into a confusion matrix.
pub fn confusion_matrix(preds: &[Prediction], labels: &LabelVector) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let c = labels.n_classes();
    let side = c + 1;
    let mut counts = vec![0u64; side * side];
    for (pred, &label) in preds.iter().zip(labels.labels()) {
        let i = label.matrix_index(c);
        let j = pred.verdict.matrix_index(c);
        counts[i * side + j] += 1;
    }
    ConfusionMatrix::from_counts(c, counts)
}

/// Fraction of correct verdicts; a correct OOD verdict on a true-OOD sample
/// counts as correct.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("accuracy of an empty confusion matrix"));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Shared recall-averaging kernel. `correct[i]` / `totals[i]` are diagonal
/// and row-sum counts for index i, with index C = OOD. Callers must ensure
/// every in-distribution total is non-zero; the threshold sweep relies on
/// this exact accumulation order for bit-exact objective comparisons.
pub(crate) fn balanced_accuracy_from_counts(
    correct: &[u64],
    totals: &[u64],
    convention: OodConvention,
) -> f64 {
    let c = correct.len() - 1;
    let mut sum = 0.0;
    for i in 0..c {
        debug_assert!(totals[i] > 0, "in-distribution class {i} has no samples");
        sum += correct[i] as f64 / totals[i] as f64;
    }
    match convention {
        OodConvention::AssumeZeroWhenAbsent => {
            if totals[c] > 0 {
                sum += correct[c] as f64 / totals[c] as f64;
            }
            sum / (c + 1) as f64
        }
        OodConvention::InDistOnly => sum / c as f64,
    }
}

fn diag_and_row_sums(cm: &ConfusionMatrix) -> Result<(Vec<u64>, Vec<u64>)> {
    let side = cm.n_classes() + 1;
    let mut correct = Vec::with_capacity(side);
    let mut totals = Vec::with_capacity(side);
    for i in 0..side {
        let total = cm.row_sum(i);
        if total == 0 && i < cm.n_classes() {
            return Err(Error::invalid(format!(
                "in-distribution class {i} has no true samples; its recall is undefined"
            )));
        }
        correct.push(cm.count(i, i));
        totals.push(total);
    }
    Ok((correct, totals))
}

/// Mean per-class recall under the given OOD convention. Every
/// in-distribution class must have at least one true sample.
pub fn balanced_accuracy(cm: &ConfusionMatrix, convention: OodConvention) -> Result<f64> {
    let (correct, totals) = diag_and_row_sums(cm)?;
    Ok(balanced_accuracy_from_counts(&correct, &totals, convention))
}

/// Per-class recalls as `C+1` values (index C = OOD, 0 when the true-OOD
/// row is empty). Errors if an in-distribution class has no true samples.
pub fn per_class_recall(cm: &ConfusionMatrix) -> Result<Vec<f64>> {
    let (correct, totals) = diag_and_row_sums(cm)?;
    Ok(correct
        .iter()
        .zip(&totals)
        .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
        .collect())
}

/// Bundle of metrics for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// `C+1` recalls, index C = OOD.
    pub per_class_recall: Vec<f64>,
    pub confusion: ConfusionMatrix,
    /// Number of true-OOD samples in the evaluated set.
    pub ood_count: usize,
    pub convention: OodConvention,
}

impl EvalReport {
    pub fn from_predictions(
        preds: &[Prediction],
        labels: &LabelVector,
        convention: OodConvention,
    ) -> Result<Self> {
        let confusion = confusion_matrix(preds, labels)?;
        Self::from_confusion(confusion, convention)
    }

    /// Recompute all metrics from a stored confusion matrix.
    pub fn from_confusion(confusion: ConfusionMatrix, convention: OodConvention) -> Result<Self> {
        let accuracy = accuracy(&confusion)?;
        let recalls = per_class_recall(&confusion)?;
        let balanced = balanced_accuracy(&confusion, convention)?;
        let ood_count = confusion.row_sum(confusion.n_classes()) as usize;
        Ok(Self {
            accuracy,
            balanced_accuracy: balanced,
            per_class_recall: recalls,
            confusion,
            ood_count,
            convention,
        })
    }
}
