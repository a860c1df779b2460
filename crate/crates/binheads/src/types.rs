//! Core domain types: labels, score matrices, thresholds, predictions,
//! feature matrices.
//!
//! All numeric payloads are `f64`; values are immutable after construction
//! and safe to share across threads.

use crate::error::{Error, Result};

/// Literal used for the out-of-distribution label in CSV files.
pub const OOD_LABEL: &str = "OOD";

/// Ground-truth or predicted class: an in-distribution index or the
/// distinguished OOD verdict. OOD is never a column index into a
/// [`ScoreMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Class(usize),
    Ood,
}

impl Label {
    /// Row/column index in a `(C+1)x(C+1)` confusion matrix: classes map to
    /// themselves, OOD maps to `C`.
    pub fn matrix_index(self, n_classes: usize) -> usize {
        match self {
            Label::Class(c) => c,
            Label::Ood => n_classes,
        }
    }

    pub fn is_ood(self) -> bool {
        matches!(self, Label::Ood)
    }
}

/// Per-sample labels plus the ordered list of in-distribution class names.
///
/// The class order is fixed by `class_names`; every matrix in the toolkit
/// indexes classes in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<Label>,
    class_names: Vec<String>,
}

impl LabelVector {
    pub fn new(labels: Vec<Label>, class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::invalid("class_names must not be empty"));
        }
        for (i, name) in class_names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::invalid("class names must be non-empty"));
            }
            if name == OOD_LABEL {
                return Err(Error::invalid(format!(
                    "class name '{OOD_LABEL}' collides with the OOD sentinel"
                )));
            }
            if class_names[..i].contains(name) {
                return Err(Error::invalid(format!("duplicate class name '{name}'")));
            }
        }
        let n = class_names.len();
        for label in &labels {
            if let Label::Class(c) = label {
                if *c >= n {
                    return Err(Error::invalid(format!(
                        "label index {c} out of range for {n} classes"
                    )));
                }
            }
        }
        Ok(Self {
            labels,
            class_names,
        })
    }

    /// Convenience constructor with class names `c0..c{n-1}`.
    pub fn with_generated_names(labels: Vec<Label>, n_classes: usize) -> Result<Self> {
        let names = (0..n_classes).map(|i| format!("c{i}")).collect();
        Self::new(labels, names)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Display name for a label (`OOD` for the sentinel).
    pub fn name_of(&self, label: Label) -> &str {
        match label {
            Label::Class(c) => &self.class_names[c],
            Label::Ood => OOD_LABEL,
        }
    }

    /// Map a label string from a data file to a [`Label`].
    pub fn parse_label(&self, s: &str) -> Option<Label> {
        if s == OOD_LABEL {
            return Some(Label::Ood);
        }
        self.class_names
            .iter()
            .position(|n| n == s)
            .map(Label::Class)
    }

    /// Number of true samples per in-distribution class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for label in &self.labels {
            if let Label::Class(c) = label {
                counts[*c] += 1;
            }
        }
        counts
    }

    pub fn ood_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_ood()).count()
    }

    /// A new vector over the same classes, keeping rows selected by `keep`.
    pub fn filtered<F: Fn(usize, Label) -> bool>(&self, keep: F) -> LabelVector {
        let labels = self
            .labels
            .iter()
            .enumerate()
            .filter(|(i, l)| keep(*i, **l))
            .map(|(_, l)| *l)
            .collect();
        LabelVector {
            labels,
            class_names: self.class_names.clone(),
        }
    }

    /// A new vector over the same classes with `extra` rows appended.
    pub fn extended(&self, extra: &[Label]) -> Result<LabelVector> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(extra);
        LabelVector::new(labels, self.class_names.clone())
    }
}

/// What a score matrix holds: independent sigmoid probabilities (or any
/// per-class probabilities) vs raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Probability,
    Logit,
}

/// N x C matrix of per-sample, per-class scores; the interchange currency of
/// the toolkit. Probability entries lie in `[0, 1]`; rows are not required to
/// sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    kind: ScoreKind,
    n_classes: usize,
    values: Vec<f64>, // row-major
}

impl ScoreMatrix {
    pub fn new(kind: ScoreKind, n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::invalid("score matrix needs at least one class"));
        }
        if values.len() % n_classes != 0 {
            return Err(Error::invalid(format!(
                "value count {} not divisible by n_classes {n_classes}",
                values.len()
            )));
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::invalid("score matrix entries must be finite"));
            }
            if kind == ScoreKind::Probability && !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "probability entry {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            kind,
            n_classes,
            values,
        })
    }

    pub fn from_rows(kind: ScoreKind, rows: &[Vec<f64>]) -> Result<Self> {
        let n_classes = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.is_empty() {
            return Err(Error::invalid(
                "cannot infer class count from zero rows; use ScoreMatrix::new",
            ));
        }
        let mut values = Vec::with_capacity(rows.len() * n_classes);
        for row in rows {
            if row.len() != n_classes {
                return Err(Error::invalid("ragged rows in score matrix"));
            }
            values.extend_from_slice(row);
        }
        Self::new(kind, n_classes, values)
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn n_samples(&self) -> usize {
        self.values.len() / self.n_classes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_classes;
        &self.values[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_classes)
    }

    /// Copy of one column (used for per-class threshold sweeps).
    pub fn column(&self, j: usize) -> Vec<f64> {
        assert!(j < self.n_classes, "column index out of range");
        self.rows().map(|r| r[j]).collect()
    }

    /// New matrix holding this one's rows followed by `rows_of[idx]` for each
    /// index in order. Kinds and widths must match.
    pub fn stacked_with(&self, rows_of: &ScoreMatrix, idx: &[usize]) -> Result<ScoreMatrix> {
        if self.kind != rows_of.kind {
            return Err(Error::invalid("score kind mismatch when stacking"));
        }
        if self.n_classes != rows_of.n_classes {
            return Err(Error::invalid("class count mismatch when stacking"));
        }
        let mut values = self.values.clone();
        for &i in idx {
            if i >= rows_of.n_samples() {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            values.extend_from_slice(rows_of.row(i));
        }
        ScoreMatrix::new(self.kind, self.n_classes, values)
    }
}

/// C per-class acceptance thresholds for the per-head decision rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector(Vec<f64>);

impl ThresholdVector {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::invalid("threshold vector must not be empty"));
        }
        for &t in &thresholds {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(Self(thresholds))
    }

    /// All-zero thresholds: every head accepts any strictly positive score.
    pub fn zeros(n_classes: usize) -> Self {
        Self(vec![0.0; n_classes])
    }

    /// All-one thresholds: every head rejects scores in `[0, 1]`.
    pub fn ones(n_classes: usize) -> Self {
        Self(vec![1.0; n_classes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        assert!(
            value.is_finite() && (0.0..=1.0).contains(&value),
            "threshold outside [0, 1]"
        );
        self.0[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-sample verdict: an in-distribution class or OOD, with a confidence.
///
/// Under the per-head gating rule the verdict is OOD exactly when the
/// confidence is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub verdict: Label,
    pub confidence: f64,
}

impl Prediction {
    pub fn ood() -> Self {
        Self {
            verdict: Label::Ood,
            confidence: 0.0,
        }
    }

    pub fn class(idx: usize, confidence: f64) -> Self {
        Self {
            verdict: Label::Class(idx),
            confidence,
        }
    }
}

/// N x D matrix of input features, row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_features: usize,
    values: Vec<f64>, // row-major
}

impl FeatureMatrix {
    pub fn new(n_features: usize, values: Vec<f64>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("feature matrix needs at least one column"));
        }
        if values.len() % n_features != 0 {
            return Err(Error::invalid(format!(
                "value count {} not divisible by n_features {n_features}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature entries must be finite"));
        }
        Ok(Self { n_features, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_features = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.is_empty() {
            return Err(Error::invalid(
                "cannot infer feature count from zero rows; use FeatureMatrix::new",
            ));
        }
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for row in rows {
            if row.len() != n_features {
                return Err(Error::invalid("ragged rows in feature matrix"));
            }
            values.extend_from_slice(row);
        }
        Self::new(n_features, values)
    }

    pub fn n_samples(&self) -> usize {
        self.values.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features;
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_features)
    }

    /// New matrix keeping the rows at `idx`, in order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_features: self.n_features,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_vector_rejects_out_of_range_index() {
        let err = LabelVector::with_generated_names(vec![Label::Class(2)], 2);
        assert!(err.is_err());
    }

    #[test]
    fn label_vector_rejects_ood_class_name() {
        let err = LabelVector::new(vec![], vec!["a".into(), OOD_LABEL.into()]);
        assert!(err.is_err());
    }

    #[test]
    fn label_vector_rejects_duplicate_names() {
        let err = LabelVector::new(vec![], vec!["a".into(), "a".into()]);
        assert!(err.is_err());
    }

    #[test]
    fn label_parsing_round_trips() {
        let lv = LabelVector::new(
            vec![Label::Class(1), Label::Ood],
            vec!["NV".into(), "MEL".into()],
        )
        .unwrap();
        assert_eq!(lv.parse_label("MEL"), Some(Label::Class(1)));
        assert_eq!(lv.parse_label("OOD"), Some(Label::Ood));
        assert_eq!(lv.parse_label("??"), None);
        assert_eq!(lv.name_of(Label::Class(0)), "NV");
        assert_eq!(lv.name_of(Label::Ood), OOD_LABEL);
        assert_eq!(lv.class_counts(), vec![0, 1]);
        assert_eq!(lv.ood_count(), 1);
    }

    #[test]
    fn probability_matrix_rejects_out_of_range() {
        let err = ScoreMatrix::new(ScoreKind::Probability, 2, vec![0.5, 1.5]);
        assert!(err.is_err());
        let ok = ScoreMatrix::new(ScoreKind::Logit, 2, vec![0.5, 1.5]);
        assert!(ok.is_ok());
    }

    #[test]
    fn score_matrix_rejects_non_finite() {
        let err = ScoreMatrix::new(ScoreKind::Logit, 1, vec![f64::NAN]);
        assert!(err.is_err());
    }

    #[test]
    fn zero_row_matrix_is_valid() {
        let m = ScoreMatrix::new(ScoreKind::Probability, 3, vec![]).unwrap();
        assert_eq!(m.n_samples(), 0);
        assert_eq!(m.n_classes(), 3);
    }

    #[test]
    fn stacking_appends_selected_rows() {
        let a = ScoreMatrix::new(ScoreKind::Probability, 2, vec![0.1, 0.9]).unwrap();
        let b = ScoreMatrix::new(ScoreKind::Probability, 2, vec![0.2, 0.8, 0.3, 0.7]).unwrap();
        let s = a.stacked_with(&b, &[1, 0]).unwrap();
        assert_eq!(s.n_samples(), 3);
        assert_eq!(s.row(1), &[0.3, 0.7]);
        assert_eq!(s.row(2), &[0.2, 0.8]);
    }

    #[test]
    fn threshold_vector_bounds_checked() {
        assert!(ThresholdVector::new(vec![0.0, 1.0]).is_ok());
        assert!(ThresholdVector::new(vec![-0.1]).is_err());
        assert!(ThresholdVector::new(vec![1.1]).is_err());
    }
}
