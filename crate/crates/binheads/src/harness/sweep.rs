//! The OOD-count sweep: evaluate every detector on a fixed
//! in-distribution test set mixed with increasing numbers of held-out
//! OOD samples.
//!
//! Subsets are nested — the OOD samples present at count k₁ < k₂ are a
//! subset of those present at k₂, drawn from one seeded shuffle per
//! repetition — so curves respond to k alone, not to resampling noise.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decision::{predict_all, DetectorConfig};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, EvalReport, OodConvention};
use crate::types::{Label, LabelVector, ScoreMatrix};

/// Sweep schedule: which OOD counts, how many repetitions, which seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConfig {
    /// OOD sample counts to evaluate, each ≤ the available OOD pool.
    pub ood_counts: Vec<usize>,
    /// Independent subset draws per count; results are averaged.
    pub repetitions: usize,
    pub seed: u64,
}

/// One detector entered into a sweep, with its own score matrices: the
/// methods consume different model outputs (sigmoid-head probabilities vs
/// softmax logits), so each brings scores for the shared fixed
/// in-distribution test set and for the shared OOD pool, row-aligned
/// across methods.
#[derive(Debug, Clone)]
pub struct SweepMethod {
    pub name: String,
    pub detector: DetectorConfig,
    /// Scores for the fixed in-distribution test set.
    pub in_dist_scores: ScoreMatrix,
    /// Scores for the full pool of available OOD samples.
    pub ood_scores: ScoreMatrix,
}

/// Result of one (method, ood_count, repetition) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub ood_count: usize,
    pub repetition: usize,
    pub report: EvalReport,
}

/// The scalar metrics of one sweep row; what `sweep.csv` stores.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: String,
    pub ood_count: usize,
    pub repetition: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub ood_recall: f64,
    pub ood_precision: Option<f64>,
}

impl SweepRow {
    pub fn point(&self) -> SweepPoint {
        SweepPoint {
            method: self.method.clone(),
            ood_count: self.ood_count,
            repetition: self.repetition,
            accuracy: self.report.accuracy,
            balanced_accuracy: self.report.balanced_accuracy,
            ood_recall: *self
                .report
                .per_class_recall
                .last()
                .expect("recall vector has an OOD slot"),
            ood_precision: ood_precision(&self.report.confusion),
        }
    }
}

/// Per-(method, ood_count) aggregate over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMean {
    pub method: String,
    pub ood_count: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub ood_recall: f64,
    /// `None` when no repetition emitted any OOD verdict (undefined, not 0).
    pub ood_precision: Option<f64>,
}

/// All rows of a sweep plus the count grid and method order used.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub ood_counts: Vec<usize>,
    pub method_names: Vec<String>,
}

/// Fraction of OOD verdicts that are true OOD; `None` when the detector
/// never said OOD (the ratio is undefined and reported as an empty cell).
pub fn ood_precision(confusion: &ConfusionMatrix) -> Option<f64> {
    let ood = confusion.n_classes();
    let said_ood = confusion.col_sum(ood);
    if said_ood == 0 {
        None
    } else {
        Some(confusion.count(ood, ood) as f64 / said_ood as f64)
    }
}

/// Per-(method, ood_count) means over repetitions, in (ood_count, method)
/// order. OOD precision averages over the repetitions where it was defined
/// and stays `None` when it never was. Cells with no points are skipped.
pub fn aggregate_points(
    points: &[SweepPoint],
    method_order: &[String],
    ood_counts: &[usize],
) -> Vec<SweepMean> {
    let mut out = Vec::new();
    for &k in ood_counts {
        for name in method_order {
            let cell: Vec<&SweepPoint> = points
                .iter()
                .filter(|p| p.ood_count == k && &p.method == name)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let n = cell.len() as f64;
            let precisions: Vec<f64> = cell.iter().filter_map(|p| p.ood_precision).collect();
            out.push(SweepMean {
                method: name.clone(),
                ood_count: k,
                accuracy: cell.iter().map(|p| p.accuracy).sum::<f64>() / n,
                balanced_accuracy: cell.iter().map(|p| p.balanced_accuracy).sum::<f64>() / n,
                ood_recall: cell.iter().map(|p| p.ood_recall).sum::<f64>() / n,
                ood_precision: if precisions.is_empty() {
                    None
                } else {
                    Some(precisions.iter().sum::<f64>() / precisions.len() as f64)
                },
            });
        }
    }
    out
}

impl SweepResult {
    pub fn points(&self) -> Vec<SweepPoint> {
        self.rows.iter().map(SweepRow::point).collect()
    }

    /// Mean metrics per (method, ood_count) in sweep order.
    pub fn means(&self) -> Vec<SweepMean> {
        aggregate_points(&self.points(), &self.method_names, &self.ood_counts)
    }

    /// The report for one (method, ood_count, repetition) cell.
    pub fn report_for(&self, method: &str, ood_count: usize, repetition: usize) -> Option<&EvalReport> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.ood_count == ood_count && r.repetition == repetition)
            .map(|r| &r.report)
    }
}

/// Run the sweep: for every repetition, shuffle the OOD pool once; for
/// every count k, append the first k shuffled OOD samples to the fixed
/// in-distribution test set and evaluate every method on the mix.
/// Balanced accuracy uses the zero-sensitivity convention (the OOD recall
/// term is 0 when k = 0). Deterministic per seed.
pub fn ood_sweep(
    in_dist_labels: &LabelVector,
    methods: &[SweepMethod],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if methods.is_empty() {
        return Err(Error::invalid("sweep needs at least one method"));
    }
    if cfg.repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    if cfg.ood_counts.is_empty() {
        return Err(Error::invalid("ood_counts must list at least one count"));
    }
    if in_dist_labels.ood_count() > 0 {
        return Err(Error::invalid(
            "the fixed test set must be purely in-distribution; OOD samples \
             belong in the OOD pool",
        ));
    }
    let n_in = in_dist_labels.len();
    if n_in == 0 {
        return Err(Error::invalid("in-distribution test set is empty"));
    }
    let pool = methods[0].ood_scores.n_samples();
    for m in methods {
        if m.in_dist_scores.n_samples() != n_in {
            return Err(Error::invalid(format!(
                "method '{}': {} in-dist score rows for {} labels",
                m.name,
                m.in_dist_scores.n_samples(),
                n_in
            )));
        }
        if m.ood_scores.n_samples() != pool {
            return Err(Error::invalid(format!(
                "method '{}': OOD pool size {} differs from {}",
                m.name,
                m.ood_scores.n_samples(),
                pool
            )));
        }
        if m.in_dist_scores.n_classes() != in_dist_labels.n_classes()
            || m.ood_scores.n_classes() != in_dist_labels.n_classes()
        {
            return Err(Error::invalid(format!(
                "method '{}': score class count differs from label class count",
                m.name
            )));
        }
    }
    for &k in &cfg.ood_counts {
        if k > pool {
            return Err(Error::invalid(format!(
                "ood count {k} exceeds the {pool} available OOD samples"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(methods.len() * cfg.ood_counts.len() * cfg.repetitions);
    for rep in 0..cfg.repetitions {
        let mut order: Vec<usize> = (0..pool).collect();
        order.shuffle(&mut rng);
        for &k in &cfg.ood_counts {
            let subset = &order[..k];
            let labels = in_dist_labels.extended(&vec![Label::Ood; k])?;
            for m in methods {
                let scores = m.in_dist_scores.stacked_with(&m.ood_scores, subset)?;
                let preds = predict_all(&scores, &m.detector)?;
                let report = EvalReport::from_predictions(
                    &preds,
                    &labels,
                    OodConvention::AssumeZeroWhenAbsent,
                )?;
                rows.push(SweepRow {
                    method: m.name.clone(),
                    ood_count: k,
                    repetition: rep,
                    report,
                });
            }
        }
    }
    Ok(SweepResult {
        rows,
        ood_counts: cfg.ood_counts.clone(),
        method_names: methods.iter().map(|m| m.name.clone()).collect(),
    })
}
