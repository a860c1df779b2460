//! Threshold calibration: randomized coordinate descent over per-class
//! thresholds, global-threshold selection for the rejection baselines, and
//! temperature fitting for the energy detector.
//!
//! All calibrators maximize balanced accuracy on the provided calibration
//! set. When that set contains no OOD samples, use
//! [`OodConvention::InDistOnly`]; thresholds can then still be set purely
//! from in-distribution data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decision::bh_predict;
use crate::error::{Error, Result};
use crate::metrics::{balanced_accuracy_from_counts, OodConvention};
use crate::types::{Label, LabelVector, Prediction, ScoreKind, ScoreMatrix, ThresholdVector};

/// One accepted-or-kept coordinate step: the class visited, the threshold
/// it ended up with, and the objective after the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationStep {
    pub class_idx: usize,
    pub threshold: f64,
    pub objective: f64,
}

/// Record of a coordinate-descent run. Objectives along `steps` are
/// non-decreasing because a step only changes a threshold on strict
/// improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTrace {
    pub steps: Vec<CalibrationStep>,
    pub rounds: usize,
    pub converged: bool,
}

/// Rejection direction for a scalar detector score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectDirection {
    /// Reject samples whose value is strictly below the threshold
    /// (max-softmax probability).
    RejectBelow,
    /// Reject samples whose value is strictly above the threshold (energy).
    RejectAbove,
}

/// Candidate thresholds realizing every accept/reject partition of the
/// given scores under a strict `score > threshold` gate: 0.0, the midpoints
/// of consecutive distinct sorted scores, and 1.0.
pub fn candidate_thresholds(class_scores: &[f64]) -> Result<Vec<f64>> {
    if class_scores.is_empty() {
        return Err(Error::invalid("candidate_thresholds needs at least one score"));
    }
    for &s in class_scores {
        if !s.is_finite() || !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("score {s} outside [0, 1]")));
        }
    }
    let mut sorted = class_scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let mut candidates = Vec::with_capacity(sorted.len() + 1);
    candidates.push(0.0);
    for pair in sorted.windows(2) {
        // Midpoint of two distinct values in [0, 1] lies strictly between
        // them, so it can never collide with the 0.0 / 1.0 sentinels.
        candidates.push(0.5 * (pair[0] + pair[1]));
    }
    candidates.push(1.0);
    Ok(candidates)
}

/// Per-sample bookkeeping for the 1-D sweep: true bucket, column score, and
/// the verdict bucket with the swept head open vs closed. Buckets index the
/// confusion diagonal, `C` = OOD.
struct SweepSample {
    score: f64,
    bucket: usize,
    open_hit: bool,
    closed_hit: bool,
}

fn sweep_inputs(
    scores: &ScoreMatrix,
    labels: &LabelVector,
    thresholds: &ThresholdVector,
    class_idx: usize,
) -> Result<(Vec<SweepSample>, Vec<u64>)> {
    let c = labels.n_classes();
    if scores.kind() != ScoreKind::Probability {
        return Err(Error::invalid("threshold sweeps need Probability scores"));
    }
    if scores.n_classes() != c || thresholds.len() != c {
        return Err(Error::invalid(format!(
            "dimension mismatch: scores {} classes, labels {c}, thresholds {}",
            scores.n_classes(),
            thresholds.len()
        )));
    }
    if scores.n_samples() != labels.len() {
        return Err(Error::invalid(format!(
            "{} score rows vs {} labels",
            scores.n_samples(),
            labels.len()
        )));
    }
    if class_idx >= c {
        return Err(Error::invalid(format!(
            "class index {class_idx} out of range for {c} classes"
        )));
    }

    let mut totals = vec![0u64; c + 1];
    for &label in labels.labels() {
        totals[label.matrix_index(c)] += 1;
    }
    for (i, &t) in totals[..c].iter().enumerate() {
        if t == 0 {
            return Err(Error::invalid(format!(
                "in-distribution class {i} has no true samples; its recall is undefined"
            )));
        }
    }

    let mut samples = Vec::with_capacity(scores.n_samples());
    for (row, &label) in scores.rows().zip(labels.labels()) {
        let p = row[class_idx];
        // Best gated head among the others, lowest index on ties.
        let mut other: Option<(usize, f64)> = None;
        for (j, &q) in row.iter().enumerate() {
            if j == class_idx {
                continue;
            }
            if q > thresholds.get(j) && other.map_or(true, |(_, best)| q > best) {
                other = Some((j, q));
            }
        }
        // Verdict with head class_idx open (p strictly above the candidate):
        // the head competes in the gated argmax, lowest index on ties.
        let open_verdict = match other {
            Some((j, q)) if q > p || (q == p && j < class_idx) => Label::Class(j),
            _ => Label::Class(class_idx),
        };
        let closed_verdict = match other {
            Some((j, _)) => Label::Class(j),
            None => Label::Ood,
        };
        let bucket = label.matrix_index(c);
        samples.push(SweepSample {
            score: p,
            bucket,
            open_hit: open_verdict.matrix_index(c) == bucket,
            closed_hit: closed_verdict.matrix_index(c) == bucket,
        });
    }
    samples.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap());
    Ok((samples, totals))
}

/// Sweep all candidate thresholds for one class, holding the others fixed,
/// and return the balanced-accuracy-maximizing `(threshold, objective)`.
/// Ties break toward the smallest candidate.
pub fn optimize_threshold_1d(
    scores: &ScoreMatrix,
    labels: &LabelVector,
    thresholds: &ThresholdVector,
    class_idx: usize,
    convention: OodConvention,
) -> Result<(f64, f64)> {
    let (samples, totals) = sweep_inputs(scores, labels, thresholds, class_idx)?;
    let candidates = candidate_thresholds(&scores.column(class_idx))?;
    let c = labels.n_classes();

    // Start with every sample's head open, then walk candidates in
    // ascending order, closing the gate for each sample whose score falls
    // at or below the candidate. Counting hits per true bucket keeps each
    // candidate evaluation O(1) beyond the pointer advance.
    let mut correct = vec![0u64; c + 1];
    for s in &samples {
        if s.open_hit {
            correct[s.bucket] += 1;
        }
    }
    let mut pointer = 0;
    let mut best: Option<(f64, f64)> = None;
    for &t in &candidates {
        while pointer < samples.len() && samples[pointer].score <= t {
            let s = &samples[pointer];
            correct[s.bucket] =
                correct[s.bucket] + s.closed_hit as u64 - s.open_hit as u64;
            pointer += 1;
        }
        let objective = balanced_accuracy_from_counts(&correct, &totals, convention);
        if best.map_or(true, |(_, obj)| objective > obj) {
            best = Some((t, objective));
        }
    }
    Ok(best.expect("candidate list is never empty"))
}

fn bh_objective(
    scores: &ScoreMatrix,
    labels: &LabelVector,
    thresholds: &ThresholdVector,
    convention: OodConvention,
) -> Result<f64> {
    let c = labels.n_classes();
    let mut correct = vec![0u64; c + 1];
    let mut totals = vec![0u64; c + 1];
    for (row, &label) in scores.rows().zip(labels.labels()) {
        let pred = bh_predict(row, thresholds)?;
        let bucket = label.matrix_index(c);
        totals[bucket] += 1;
        if pred.verdict.matrix_index(c) == bucket {
            correct[bucket] += 1;
        }
    }
    for (i, &t) in totals[..c].iter().enumerate() {
        if t == 0 {
            return Err(Error::invalid(format!(
                "in-distribution class {i} has no true samples; its recall is undefined"
            )));
        }
    }
    Ok(balanced_accuracy_from_counts(&correct, &totals, convention))
}

/// Randomized coordinate descent over per-class thresholds.
///
/// Each round visits every class once in a seed-determined random order and
/// re-optimizes its threshold with the others held fixed; a new value is
/// kept only when the objective strictly improves. Stops after a round with
/// no improvement (converged) or after `max_rounds`.
pub fn coordinate_descent(
    scores: &ScoreMatrix,
    labels: &LabelVector,
    init: &ThresholdVector,
    seed: u64,
    max_rounds: usize,
    convention: OodConvention,
) -> Result<(ThresholdVector, CalibrationTrace)> {
    if max_rounds == 0 {
        return Err(Error::invalid("max_rounds must be at least 1"));
    }
    let c = labels.n_classes();
    if init.len() != c {
        return Err(Error::invalid(format!(
            "{} initial thresholds for {c} classes",
            init.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = init.clone();
    let mut objective = bh_objective(scores, labels, &current, convention)?;

    let mut steps = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        let mut order: Vec<usize> = (0..c).collect();
        order.shuffle(&mut rng);
        let mut improved = false;
        for &class_idx in &order {
            let (t, obj) = optimize_threshold_1d(scores, labels, &current, class_idx, convention)?;
            if obj > objective {
                current.set(class_idx, t);
                objective = obj;
                improved = true;
            }
            steps.push(CalibrationStep {
                class_idx,
                threshold: current.get(class_idx),
                objective,
            });
        }
        rounds += 1;
        if !improved {
            converged = true;
            break;
        }
    }
    Ok((
        current,
        CalibrationTrace {
            steps,
            rounds,
            converged,
        },
    ))
}

/// Pick the balanced-accuracy-maximizing global threshold for a scalar
/// detector score (max-softmax probability or energy).
///
/// `values[i]` is sample i's detector score and `preds_if_accepted[i]` the
/// verdict it receives when not rejected. Candidates are the midpoints of
/// consecutive distinct sorted values plus two boundary candidates that
/// reject nothing and reject everything. Ties break toward rejecting less.
pub fn calibrate_global_threshold(
    values: &[f64],
    preds_if_accepted: &[Prediction],
    labels: &LabelVector,
    direction: RejectDirection,
    convention: OodConvention,
) -> Result<(f64, f64)> {
    if values.len() != preds_if_accepted.len() || values.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} values vs {} predictions vs {} labels",
            values.len(),
            preds_if_accepted.len(),
            labels.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::invalid("cannot calibrate on an empty set"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("detector values must be finite"));
    }
    let c = labels.n_classes();
    let mut totals = vec![0u64; c + 1];
    for &label in labels.labels() {
        totals[label.matrix_index(c)] += 1;
    }
    for (i, &t) in totals[..c].iter().enumerate() {
        if t == 0 {
            return Err(Error::invalid(format!(
                "in-distribution class {i} has no true samples; its recall is undefined"
            )));
        }
    }

    // Sort samples by value; precompute per-sample hit flags for the
    // accepted and rejected outcomes.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let sorted: Vec<(f64, usize, bool, bool)> = order
        .iter()
        .map(|&i| {
            let bucket = labels.labels()[i].matrix_index(c);
            let accept_hit = preds_if_accepted[i].verdict.matrix_index(c) == bucket;
            let reject_hit = bucket == c;
            (values[i], bucket, accept_hit, reject_hit)
        })
        .collect();

    let mut distinct: Vec<f64> = sorted.iter().map(|s| s.0).collect();
    distinct.dedup();
    let v_min = distinct[0];
    let v_max = distinct[distinct.len() - 1];
    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    // First candidate rejects nothing, last rejects everything; both walks
    // below go from rejecting less toward rejecting more so that strict
    // improvement keeps the least-rejecting threshold on ties.
    match direction {
        RejectDirection::RejectBelow => {
            candidates.push(v_min);
            for pair in distinct.windows(2) {
                candidates.push(0.5 * (pair[0] + pair[1]));
            }
            candidates.push(v_max + 1.0);
        }
        RejectDirection::RejectAbove => {
            candidates.push(v_max);
            for pair in distinct.windows(2).rev() {
                candidates.push(0.5 * (pair[0] + pair[1]));
            }
            candidates.push(v_min - 1.0);
        }
    }

    // Start with every sample accepted and flip them to rejected as the
    // candidate walks across the sorted values.
    let mut correct = vec![0u64; c + 1];
    for s in &sorted {
        if s.2 {
            correct[s.1] += 1;
        }
    }
    let mut flipped = 0usize;
    let mut best: Option<(f64, f64)> = None;
    for &t in &candidates {
        match direction {
            RejectDirection::RejectBelow => {
                // Rejected set: value strictly below t, a prefix of sorted.
                while flipped < sorted.len() && sorted[flipped].0 < t {
                    let s = &sorted[flipped];
                    correct[s.1] = correct[s.1] + s.3 as u64 - s.2 as u64;
                    flipped += 1;
                }
            }
            RejectDirection::RejectAbove => {
                // Rejected set: value strictly above t, a suffix of sorted.
                while flipped < sorted.len() && sorted[sorted.len() - 1 - flipped].0 > t {
                    let s = &sorted[sorted.len() - 1 - flipped];
                    correct[s.1] = correct[s.1] + s.3 as u64 - s.2 as u64;
                    flipped += 1;
                }
            }
        }
        let objective = balanced_accuracy_from_counts(&correct, &totals, convention);
        if best.map_or(true, |(_, obj)| objective > obj) {
            best = Some((t, objective));
        }
    }
    Ok(best.expect("candidate list is never empty"))
}

/// Mean negative log-likelihood of `softmax(logits / T)` against the true
/// classes, computed via logsumexp with max-subtraction.
fn mean_nll(logits: &ScoreMatrix, labels: &LabelVector, temperature: f64) -> f64 {
    let mut total = 0.0;
    for (row, &label) in logits.rows().zip(labels.labels()) {
        let Label::Class(true_idx) = label else {
            unreachable!("fit_temperature validates labels up front");
        };
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
        let sum: f64 = row.iter().map(|&v| (v / temperature - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[true_idx] / temperature;
    }
    total / logits.n_samples() as f64
}

/// Fit the softmax temperature by minimizing mean negative log-likelihood
/// over `[t_min, t_max]` with golden-section search (absolute tolerance
/// 1e-4 on the temperature). The result is cross-checked against both
/// interval ends and T=1 so it never loses to those anchors even if the
/// NLL is not unimodal.
pub fn fit_temperature(
    logits: &ScoreMatrix,
    labels: &LabelVector,
    t_min: f64,
    t_max: f64,
) -> Result<f64> {
    if logits.kind() != ScoreKind::Logit {
        return Err(Error::invalid("temperature fitting needs Logit scores"));
    }
    if !(t_min > 0.0) || !(t_max > t_min) || !t_max.is_finite() {
        return Err(Error::invalid(format!(
            "need 0 < t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    if logits.n_samples() != labels.len() {
        return Err(Error::invalid(format!(
            "{} logit rows vs {} labels",
            logits.n_samples(),
            labels.len()
        )));
    }
    if logits.n_samples() == 0 {
        return Err(Error::invalid("cannot fit temperature on an empty set"));
    }
    if logits.n_classes() != labels.n_classes() {
        return Err(Error::invalid("class count mismatch"));
    }
    if labels.labels().iter().any(|l| l.is_ood()) {
        return Err(Error::invalid(
            "temperature fitting needs in-distribution labels only",
        ));
    }

    let nll = |t: f64| mean_nll(logits, labels, t);

    // Golden-section search for the minimum.
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut a, mut b) = (t_min, t_max);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = nll(x1);
    let mut f2 = nll(x2);
    while b - a > 1e-4 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = nll(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = nll(x2);
        }
    }
    let mid = 0.5 * (a + b);

    let mut anchors = vec![mid, t_min, t_max];
    if (t_min..=t_max).contains(&1.0) {
        anchors.push(1.0);
    }
    let best = anchors
        .into_iter()
        .map(|t| (t, nll(t)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(t, _)| t)
        .expect("anchor list is never empty");
    Ok(best)
}
