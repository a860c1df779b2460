//! Prediction rules: per-class-threshold gating of independent sigmoid
//! heads, plain argmax, max-softmax-probability rejection, and energy-based
//! rejection.
//!
//! The gated rule scores a sample as `max_i H(prob_i - threshold_i) *
//! prob_i` where `H` is the Heaviside step with `H(0) = 0`: a head passes
//! only when its probability strictly exceeds its threshold. A sample with
//! no passing head is declared out-of-distribution. All comparisons in the
//! rejection baselines are strict for the same reason, and every argmax
//! breaks ties toward the lowest class index. Each rule looks at one row at
//! a time; verdicts never depend on other samples.

use crate::error::{Error, Result};
use crate::metrics::softmax;
use crate::types::{Prediction, ScoreKind, ScoreMatrix, ThresholdVector};

/// A fully parameterized decision rule; fields exist exactly where the
/// method needs them.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorConfig {
    /// Per-class gating of sigmoid-head probabilities.
    BhThreshold { thresholds: ThresholdVector },
    /// Plain argmax; never emits OOD.
    VanillaArgmax,
    /// Reject when the maximum softmax probability falls below a global
    /// threshold.
    MaxSoftmaxProb { global_threshold: f64 },
    /// Reject when `-T * logsumexp(logits / T)` rises above a global
    /// threshold.
    Energy {
        global_threshold: f64,
        temperature: f64,
    },
}

impl DetectorConfig {
    /// Short stable identifier used in reports and file names.
    pub fn method_name(&self) -> &'static str {
        match self {
            DetectorConfig::BhThreshold { .. } => "bh",
            DetectorConfig::VanillaArgmax => "vanilla",
            DetectorConfig::MaxSoftmaxProb { .. } => "msp",
            DetectorConfig::Energy { .. } => "energy",
        }
    }
}

fn validate_probs(probs_row: &[f64]) -> Result<()> {
    if probs_row.is_empty() {
        return Err(Error::invalid("probability row must be non-empty"));
    }
    for &p in probs_row {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Index of the row maximum, lowest index on ties. Caller guarantees a
/// non-empty row of finite values.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Gated per-head rule: the verdict is the passing head with the highest
/// probability (`prob > threshold`, strictly), or OOD when no head passes.
pub fn bh_predict(probs_row: &[f64], thresholds: &ThresholdVector) -> Result<Prediction> {
    validate_probs(probs_row)?;
    if probs_row.len() != thresholds.len() {
        return Err(Error::invalid(format!(
            "{} probabilities vs {} thresholds",
            probs_row.len(),
            thresholds.len()
        )));
    }
    let mut best: Option<usize> = None;
    let mut confidence = 0.0;
    for (i, &p) in probs_row.iter().enumerate() {
        // Strict > on both comparisons: H(0) = 0, and ties in the gated
        // maximum keep the lowest class index.
        if p > thresholds.get(i) && p > confidence {
            best = Some(i);
            confidence = p;
        }
    }
    Ok(match best {
        Some(i) => Prediction::class(i, confidence),
        None => Prediction::ood(),
    })
}

/// Plain argmax over probabilities; never OOD.
pub fn vanilla_predict(probs_row: &[f64]) -> Result<Prediction> {
    validate_probs(probs_row)?;
    let i = argmax(probs_row);
    Ok(Prediction::class(i, probs_row[i]))
}

/// Argmax with rejection: OOD when the maximum probability is strictly
/// below `global_threshold`. The row must be a probability distribution
/// (sums to 1 within 1e-6).
pub fn msp_predict(probs_row: &[f64], global_threshold: f64) -> Result<Prediction> {
    validate_probs(probs_row)?;
    let sum: f64 = probs_row.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "softmax row sums to {sum}, expected 1"
        )));
    }
    if global_threshold.is_nan() {
        return Err(Error::invalid("global threshold must not be NaN"));
    }
    let i = argmax(probs_row);
    if probs_row[i] < global_threshold {
        Ok(Prediction::ood())
    } else {
        Ok(Prediction::class(i, probs_row[i]))
    }
}

/// Energy of one row of logits: `-T * logsumexp(logits / T)`, computed with
/// max-subtraction so large logits cannot overflow. Higher energy means
/// more OOD-like.
pub fn energy_score(logits_row: &[f64], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "energy temperature must be positive and finite, got {temperature}"
        )));
    }
    if logits_row.is_empty() {
        return Err(Error::invalid("logit row must be non-empty"));
    }
    if logits_row.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("logits must be finite"));
    }
    let max = logits_row
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
    let sum: f64 = logits_row
        .iter()
        .map(|&v| (v / temperature - max).exp())
        .sum();
    Ok(-temperature * (max + sum.ln()))
}

/// Argmax of logits with rejection: OOD when the row's energy is strictly
/// above `energy_threshold`. Accepted verdicts carry the maximum softmax
/// probability (at the same temperature) as confidence.
pub fn energy_predict(
    logits_row: &[f64],
    temperature: f64,
    energy_threshold: f64,
) -> Result<Prediction> {
    if energy_threshold.is_nan() {
        return Err(Error::invalid("energy threshold must not be NaN"));
    }
    let energy = energy_score(logits_row, temperature)?;
    if energy > energy_threshold {
        return Ok(Prediction::ood());
    }
    let i = argmax(logits_row);
    let probs = softmax(logits_row, temperature)?;
    Ok(Prediction::class(i, probs[i]))
}

/// Apply one configured rule to every row of a score matrix.
///
/// Kinds must match the method: `Probability` for the gated rule, argmax
/// and max-softmax-probability; `Logit` for energy. The
/// max-softmax-probability rule also accepts `Logit` rows, which are passed
/// through a temperature-1 softmax first.
pub fn predict_all(scores: &ScoreMatrix, config: &DetectorConfig) -> Result<Vec<Prediction>> {
    let kind = scores.kind();
    let mut out = Vec::with_capacity(scores.n_samples());
    match config {
        DetectorConfig::BhThreshold { thresholds } => {
            require_kind(kind, ScoreKind::Probability, "per-class thresholding")?;
            for row in scores.rows() {
                out.push(bh_predict(row, thresholds)?);
            }
        }
        DetectorConfig::VanillaArgmax => {
            require_kind(kind, ScoreKind::Probability, "argmax")?;
            for row in scores.rows() {
                out.push(vanilla_predict(row)?);
            }
        }
        DetectorConfig::MaxSoftmaxProb { global_threshold } => match kind {
            ScoreKind::Probability => {
                for row in scores.rows() {
                    out.push(msp_predict(row, *global_threshold)?);
                }
            }
            ScoreKind::Logit => {
                for row in scores.rows() {
                    out.push(msp_predict(&softmax(row, 1.0)?, *global_threshold)?);
                }
            }
        },
        DetectorConfig::Energy {
            global_threshold,
            temperature,
        } => {
            require_kind(kind, ScoreKind::Logit, "energy scoring")?;
            for row in scores.rows() {
                out.push(energy_predict(row, *temperature, *global_threshold)?);
            }
        }
    }
    Ok(out)
}

fn require_kind(got: ScoreKind, want: ScoreKind, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!(
            "{what} needs {want:?} scores, got {got:?}"
        )));
    }
    Ok(())
}
