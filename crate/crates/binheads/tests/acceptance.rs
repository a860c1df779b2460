//! Acceptance gate: ten release criteria, one printed PASS/FAIL line each.
//!
//! Run with `cargo test --test acceptance` (the target uses `harness =
//! false`, so this is a plain binary). Every criterion runs even if an
//! earlier one fails; the process exits nonzero if any line reports FAIL.
//!
//! The end-to-end criteria (8 and 9) train real models on the default
//! experiment configuration over five seeds and dominate the runtime
//! (a few minutes); everything else finishes in seconds.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use binheads::calibrate::{candidate_thresholds, coordinate_descent};
use binheads::decision::{bh_predict, energy_score, predict_all, DetectorConfig};
use binheads::harness::{run_experiment, SweepResult};
use binheads::metrics::{EvalReport, OodConvention};
use binheads::nnet::{batch_loss, gradients, HeadKind, MlpConfig, ModelParams};
use binheads::{
    FeatureMatrix, Label, LabelVector, Prediction, ScoreKind, ScoreMatrix, ThresholdVector,
};

type Outcome = Result<String, String>;

fn main() {
    println!("acceptance criteria");
    let mut all_ok = true;
    all_ok &= run(1, "gated decision rule matches a brute-force oracle", c1);
    all_ok &= run(2, "descent trace is monotone and ends at a 1-D optimum", c2);
    all_ok &= run(3, "calibration from zeros never falls below argmax", c3);
    all_ok &= run(4, "two-class descent reaches the exhaustive-grid optimum", c4);
    all_ok &= run(5, "analytic gradients match finite differences", c5);
    all_ok &= run(6, "energy score: closed form and shift invariance", c6);
    all_ok &= run(7, "zero-OOD balanced accuracy counts the empty OOD row", c7);
    all_ok &= run(8, "end-to-end: thresholds beat argmax and max-softmax", c8);
    all_ok &= run(9, "OOD-free calibration stays within 0.05 of OOD-aware", c9);
    all_ok &= run(10, "repeated runs write byte-identical CSV artifacts", c10);
    if all_ok {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
}

fn run(number: usize, title: &str, criterion: fn() -> Outcome) -> bool {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(criterion));
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(Ok(detail)) => {
            println!("criterion {number}: PASS — {title} ({detail}; {secs:.1}s)");
            true
        }
        Ok(Err(detail)) => {
            println!("criterion {number}: FAIL — {title} ({detail})");
            false
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "non-string panic".into());
            println!("criterion {number}: FAIL — {title} (panicked: {msg})");
            false
        }
    }
}

/// Balanced accuracy of the gated detector at `thresholds`, computed through
/// the public evaluation path (the same arithmetic the calibrator optimizes,
/// so exact comparisons against descent objectives are meaningful).
fn bh_objective(
    scores: &ScoreMatrix,
    labels: &LabelVector,
    thresholds: &ThresholdVector,
    convention: OodConvention,
) -> f64 {
    let preds = predict_all(
        scores,
        &DetectorConfig::BhThreshold {
            thresholds: thresholds.clone(),
        },
    )
    .expect("valid thresholds");
    EvalReport::from_predictions(&preds, labels, convention)
        .expect("consistent shapes")
        .balanced_accuracy
}

// -----------------------------------------------------------------------
// criterion 1: decision-rule oracle
// -----------------------------------------------------------------------

fn c1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..10_000u64 {
        let n_classes = rng.gen_range(1..=8);
        let mut probs: Vec<f64> = (0..n_classes).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut thresholds: Vec<f64> = (0..n_classes).map(|_| rng.gen_range(0.0..1.0)).collect();
        // Force the edge cases: a probability exactly at its threshold must
        // stay silent, and equal gated maxima must resolve to the lowest
        // class index.
        if case % 7 == 0 {
            let j = rng.gen_range(0..n_classes);
            thresholds[j] = probs[j];
        }
        if case % 10 == 0 && n_classes >= 2 {
            let j = rng.gen_range(1..n_classes);
            probs[j] = probs[0];
        }

        // Oracle: gate each head with a strict Heaviside step, then take the
        // first maximum of the gated values.
        let gated: Vec<f64> = probs
            .iter()
            .zip(&thresholds)
            .map(|(&p, &t)| if p > t { p } else { 0.0 })
            .collect();
        let mut want: Option<usize> = None;
        for (i, &g) in gated.iter().enumerate() {
            if g > 0.0 && want.map_or(true, |b| g > gated[b]) {
                want = Some(i);
            }
        }

        let got = bh_predict(&probs, &ThresholdVector::new(thresholds.clone()).unwrap())
            .map_err(|e| format!("case {case}: {e}"))?;
        let agree = match (want, got.verdict) {
            (None, Label::Ood) => got.confidence == 0.0,
            (Some(i), Label::Class(j)) => i == j && got.confidence == gated[i],
            _ => false,
        };
        if !agree {
            return Err(format!(
                "case {case}: oracle {want:?} vs verdict {:?} (confidence {})",
                got.verdict, got.confidence
            ));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 5.0 {
        return Err(format!("took {secs:.2}s, bound is 5s"));
    }
    Ok("10,000 random (probs, thresholds) pairs, C in 1..=8, exact agreement".into())
}

// -----------------------------------------------------------------------
// criteria 2 and 3: coordinate-descent properties on a shared suite
// -----------------------------------------------------------------------

/// A random classifiable-but-imperfect validation set: in-distribution rows
/// skew high on their own head, a quarter of rows are OOD, every score is
/// strictly positive so all-zero thresholds behave exactly like argmax.
fn random_val_set(seed: u64) -> (ScoreMatrix, LabelVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = rng.gen_range(2..=5);
    let n_rows = rng.gen_range(20..=300);
    let mut values = Vec::with_capacity(n_rows * n_classes);
    let mut labels = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let is_ood = rng.gen_bool(0.25);
        let true_class = rng.gen_range(0..n_classes);
        for class in 0..n_classes {
            let v = if !is_ood && class == true_class {
                rng.gen_range(0.3..1.0)
            } else {
                rng.gen_range(1e-6..0.6)
            };
            values.push(v);
        }
        labels.push(if is_ood {
            Label::Ood
        } else {
            Label::Class(true_class)
        });
    }
    (
        ScoreMatrix::new(ScoreKind::Probability, n_classes, values).unwrap(),
        LabelVector::with_generated_names(labels, n_classes).unwrap(),
    )
}

fn c2() -> Outcome {
    let started = Instant::now();
    let convention = OodConvention::AssumeZeroWhenAbsent;
    for seed in 0..100u64 {
        let (scores, labels) = random_val_set(200 + seed);
        let n_classes = scores.n_classes();
        // Alternate between the all-open start and a random one; the
        // properties under test hold from any start.
        let init = if seed % 2 == 0 {
            ThresholdVector::zeros(n_classes)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
            ThresholdVector::new((0..n_classes).map(|_| rng.gen_range(0.0..1.0)).collect())
                .unwrap()
        };
        let (final_thresholds, trace) =
            coordinate_descent(&scores, &labels, &init, seed, 50, convention)
                .map_err(|e| format!("seed {seed}: {e}"))?;
        if !trace.converged {
            return Err(format!("seed {seed}: no fixed point within 50 rounds"));
        }

        let mut previous = f64::NEG_INFINITY;
        for step in &trace.steps {
            if step.objective < previous {
                return Err(format!(
                    "seed {seed}: objective fell from {previous} to {} at class {}",
                    step.objective, step.class_idx
                ));
            }
            previous = step.objective;
        }

        // Local optimality, exact: no single-class candidate replacement may
        // beat the fixed point.
        let base = bh_objective(&scores, &labels, &final_thresholds, convention);
        for class in 0..n_classes {
            let column: Vec<f64> = scores.rows().map(|row| row[class]).collect();
            for cand in candidate_thresholds(&column).map_err(|e| e.to_string())? {
                let mut moved = final_thresholds.as_slice().to_vec();
                moved[class] = cand;
                let moved = ThresholdVector::new(moved).unwrap();
                let objective = bh_objective(&scores, &labels, &moved, convention);
                if objective > base {
                    return Err(format!(
                        "seed {seed}: class {class} at {cand} improves {base} -> {objective}"
                    ));
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.2}s, bound is 60s"));
    }
    Ok("100 sets (N ≤ 300, C ≤ 5): traces monotone, fixed points 1-D optimal, exact".into())
}

fn c3() -> Outcome {
    let convention = OodConvention::AssumeZeroWhenAbsent;
    for seed in 0..100u64 {
        let (scores, labels) = random_val_set(200 + seed);
        let init = ThresholdVector::zeros(scores.n_classes());
        let (final_thresholds, _) =
            coordinate_descent(&scores, &labels, &init, seed, 50, convention)
                .map_err(|e| format!("seed {seed}: {e}"))?;
        let calibrated = bh_objective(&scores, &labels, &final_thresholds, convention);
        let vanilla_preds = predict_all(&scores, &DetectorConfig::VanillaArgmax)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let vanilla = EvalReport::from_predictions(&vanilla_preds, &labels, convention)
            .map_err(|e| format!("seed {seed}: {e}"))?
            .balanced_accuracy;
        if calibrated < vanilla {
            return Err(format!(
                "seed {seed}: calibrated {calibrated} below vanilla {vanilla}"
            ));
        }
    }
    Ok("calibrated ≥ argmax balanced accuracy on all 100 calibration sets".into())
}

// -----------------------------------------------------------------------
// criterion 4: exhaustive grid agreement at C = 2
// -----------------------------------------------------------------------

fn c4() -> Outcome {
    let started = Instant::now();
    let convention = OodConvention::AssumeZeroWhenAbsent;
    let mut hits = 0;
    for seed in 0..100u64 {
        // Hand-built score pattern, jittered per seed: in-distribution rows
        // score high on their own head and low (sometimes exactly zero) on
        // the other; OOD rows are loud on one head and exactly zero on the
        // other. The exact zeros matter: a silent second head lets a single
        // threshold move already produce rejections, so a strict-improvement
        // path from the all-open start to the grid optimum exists.
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let n_rows = rng.gen_range(4..=12);
        let mut values = Vec::with_capacity(n_rows * 2);
        let mut labels = Vec::with_capacity(n_rows);
        for row in 0..n_rows {
            // Keep every recall term populated via the first three rows.
            let label = match row {
                0 => Label::Class(0),
                1 => Label::Class(1),
                2 => Label::Ood,
                _ => match rng.gen_range(0..10) {
                    0..=3 => Label::Class(0),
                    4..=6 => Label::Class(1),
                    _ => Label::Ood,
                },
            };
            let row_scores = match label {
                Label::Class(own) => {
                    let high = rng.gen_range(0.55..0.95);
                    let low = if rng.gen_bool(0.5) {
                        0.0
                    } else {
                        rng.gen_range(0.05..0.45)
                    };
                    if own == 0 {
                        [high, low]
                    } else {
                        [low, high]
                    }
                }
                Label::Ood => {
                    let loud = rng.gen_range(0.05..0.50);
                    if rng.gen_bool(0.5) {
                        [loud, 0.0]
                    } else {
                        [0.0, loud]
                    }
                }
            };
            values.extend_from_slice(&row_scores);
            labels.push(label);
        }
        let scores = ScoreMatrix::new(ScoreKind::Probability, 2, values).unwrap();
        let labels = LabelVector::with_generated_names(labels, 2).unwrap();

        let (final_thresholds, _) = coordinate_descent(
            &scores,
            &labels,
            &ThresholdVector::zeros(2),
            seed,
            50,
            convention,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let reached = bh_objective(&scores, &labels, &final_thresholds, convention);

        let column = |class: usize| -> Vec<f64> { scores.rows().map(|r| r[class]).collect() };
        let cands0 = candidate_thresholds(&column(0)).map_err(|e| e.to_string())?;
        let cands1 = candidate_thresholds(&column(1)).map_err(|e| e.to_string())?;
        let mut grid_best = f64::NEG_INFINITY;
        for &a in &cands0 {
            for &b in &cands1 {
                let pair = ThresholdVector::new(vec![a, b]).unwrap();
                grid_best = grid_best.max(bh_objective(&scores, &labels, &pair, convention));
            }
        }

        if reached > grid_best {
            return Err(format!(
                "seed {seed}: descent {reached} exceeds grid best {grid_best}"
            ));
        }
        if reached == grid_best {
            hits += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 30.0 {
        return Err(format!("took {secs:.2}s, bound is 30s"));
    }
    if hits < 90 {
        return Err(format!("{hits}/100 instances reached the grid optimum, need ≥ 90"));
    }
    Ok(format!(
        "{hits}/100 two-class instances reach the exhaustive product-grid optimum, none exceed it"
    ))
}

// -----------------------------------------------------------------------
// criterion 5: gradient checks
// -----------------------------------------------------------------------

/// Smallest |pre-activation| any trunk unit sees across the batch. Central
/// finite differences are meaningless when a perturbation straddles the ReLU
/// kink, so the gradient check redraws configurations that put any unit
/// too close to zero.
fn min_abs_preactivation(params: &ModelParams, features: &FeatureMatrix) -> f64 {
    let layers = params.layers();
    let trunk = &layers[..layers.len() - 1];
    let mut min_abs = f64::INFINITY;
    for row in features.rows() {
        let mut current: Vec<f64> = row.to_vec();
        for layer in trunk {
            let mut activated = Vec::with_capacity(layer.out_dim);
            for unit in 0..layer.out_dim {
                let weights = &layer.weights[unit * layer.in_dim..(unit + 1) * layer.in_dim];
                let z = layer.bias[unit]
                    + weights.iter().zip(&current).map(|(w, x)| w * x).sum::<f64>();
                min_abs = min_abs.min(z.abs());
                activated.push(z.max(0.0));
            }
            current = activated;
        }
    }
    min_abs
}

fn c5() -> Outcome {
    let started = Instant::now();
    for case in 0..50u64 {
        let head_kind = if case % 2 == 0 {
            HeadKind::BinaryHeads
        } else {
            HeadKind::Softmax
        };
        let mut attempt = 0u64;
        let (config, params, features, labels) = loop {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + case + 1000 * attempt);
            let input_dim = rng.gen_range(2..=4);
            let hidden_dims = if rng.gen_bool(0.5) {
                vec![rng.gen_range(2..=4)]
            } else {
                vec![rng.gen_range(2..=4), rng.gen_range(2..=3)]
            };
            let n_classes = rng.gen_range(2..=3);
            let config = MlpConfig {
                input_dim,
                hidden_dims,
                n_classes,
                head_kind,
            };
            let params = ModelParams::init(&config, 900 + case + 1000 * attempt)
                .map_err(|e| e.to_string())?;
            let n_rows = rng.gen_range(2..=8);
            let features = FeatureMatrix::new(
                input_dim,
                (0..n_rows * input_dim)
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect(),
            )
            .map_err(|e| e.to_string())?;
            let labels = LabelVector::with_generated_names(
                (0..n_rows)
                    .map(|_| Label::Class(rng.gen_range(0..n_classes)))
                    .collect(),
                n_classes,
            )
            .map_err(|e| e.to_string())?;
            if min_abs_preactivation(&params, &features) > 1e-4 {
                break (config, params, features, labels);
            }
            attempt += 1;
            if attempt > 20 {
                return Err(format!("case {case}: no kink-free draw in 20 attempts"));
            }
        };

        let analytic_layers =
            gradients(&params, &features, &labels).map_err(|e| e.to_string())?;
        let mut analytic = Vec::new();
        for layer in &analytic_layers {
            analytic.extend_from_slice(&layer.weights);
            analytic.extend_from_slice(&layer.bias);
        }

        let theta = params.to_flat();
        let h = 1e-6;
        for j in 0..theta.len() {
            let mut plus = theta.clone();
            plus[j] += h;
            let mut minus = theta.clone();
            minus[j] -= h;
            let loss_plus = batch_loss(
                &ModelParams::from_flat(&config, &plus).map_err(|e| e.to_string())?,
                &features,
                &labels,
            )
            .map_err(|e| e.to_string())?;
            let loss_minus = batch_loss(
                &ModelParams::from_flat(&config, &minus).map_err(|e| e.to_string())?,
                &features,
                &labels,
            )
            .map_err(|e| e.to_string())?;
            let fd = (loss_plus - loss_minus) / (2.0 * h);
            let scale = analytic[j].abs().max(fd.abs()).max(1e-6);
            let rel = (analytic[j] - fd).abs() / scale;
            if rel >= 1e-4 {
                return Err(format!(
                    "case {case} ({head_kind:?}): parameter {j} analytic {} vs fd {fd} (rel {rel:.2e})",
                    analytic[j]
                ));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 30.0 {
        return Err(format!("took {secs:.2}s, bound is 30s"));
    }
    Ok("50 random configurations, both head kinds, relative error < 1e-4".into())
}

// -----------------------------------------------------------------------
// criterion 6: energy closed forms
// -----------------------------------------------------------------------

fn c6() -> Outcome {
    let zero_row = energy_score(&[0.0, 0.0, 0.0, 0.0], 1.0).map_err(|e| e.to_string())?;
    let want = -(4.0f64).ln();
    if (zero_row - want).abs() >= 1e-9 {
        return Err(format!("energy of four zero logits: {zero_row} vs -ln 4 = {want}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    for case in 0..1000 {
        let len = rng.gen_range(1..=8);
        let row: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let shift = rng.gen_range(-5.0..5.0);
        let temperature = if case % 2 == 0 {
            1.0
        } else {
            rng.gen_range(0.5..5.0)
        };
        let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
        let lhs = energy_score(&shifted, temperature).map_err(|e| e.to_string())?;
        let rhs = energy_score(&row, temperature).map_err(|e| e.to_string())? - shift;
        if (lhs - rhs).abs() >= 1e-9 {
            return Err(format!(
                "case {case}: E(logits+{shift}) = {lhs} but E(logits)-{shift} = {rhs}"
            ));
        }
    }
    Ok("-ln 4 anchor within 1e-9; shift identity within 1e-9 on 1,000 rows".into())
}

// -----------------------------------------------------------------------
// criterion 7: zero-OOD balanced-accuracy convention
// -----------------------------------------------------------------------

fn c7() -> Outcome {
    let labels = LabelVector::with_generated_names(
        vec![
            Label::Class(0),
            Label::Class(1),
            Label::Class(0),
            Label::Class(1),
        ],
        2,
    )
    .map_err(|e| e.to_string())?;
    let preds: Vec<Prediction> = labels
        .labels()
        .iter()
        .map(|label| match label {
            Label::Class(i) => Prediction::class(*i, 1.0),
            Label::Ood => unreachable!("no OOD rows in this set"),
        })
        .collect();
    let ba = EvalReport::from_predictions(&preds, &labels, OodConvention::AssumeZeroWhenAbsent)
        .map_err(|e| e.to_string())?
        .balanced_accuracy;
    let want = 2.0 / 3.0;
    if (ba - want).abs() >= 1e-12 {
        return Err(format!("perfect 2-class, zero OOD: {ba} vs {want}"));
    }
    Ok("perfect 2-class classifier with zero OOD rows scores exactly 2/3".into())
}

// -----------------------------------------------------------------------
// criteria 8 and 9: the end-to-end experiment, shared across both
// -----------------------------------------------------------------------

struct SeedRun {
    seed: u64,
    /// Vanilla mean in-distribution recall (its balanced accuracy over the
    /// in-distribution classes alone), independent of contamination.
    window: f64,
    bh: f64,
    vanilla: f64,
    msp: f64,
    /// Test balanced accuracy lost at the heaviest contamination when the
    /// thresholds were calibrated without seeing any OOD rows.
    degradation: f64,
    vanilla_accuracy_strictly_decreasing: bool,
}

static END_TO_END: OnceLock<Result<(Vec<SeedRun>, f64), String>> = OnceLock::new();

fn end_to_end() -> &'static Result<(Vec<SeedRun>, f64), String> {
    END_TO_END.get_or_init(|| {
        let started = Instant::now();
        let mut runs = Vec::new();
        for seed in [11u64, 44, 55, 77, 99] {
            let ood_aware_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let ood_aware = run_experiment("", seed, ood_aware_dir.path())
                .map_err(|e| format!("seed {seed}: {e}"))?;
            let ood_free_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let ood_free = run_experiment(
                "[calibrate]\nconvention = in_dist_only\n",
                seed,
                ood_free_dir.path(),
            )
            .map_err(|e| format!("seed {seed}: {e}"))?;

            let max_k = *ood_aware.ood_counts.iter().max().unwrap();
            let ba = |result: &SweepResult, method: &str, k: usize| -> Result<f64, String> {
                result
                    .means()
                    .into_iter()
                    .find(|m| m.method == method && m.ood_count == k)
                    .map(|m| m.balanced_accuracy)
                    .ok_or_else(|| format!("seed {seed}: no {method} mean at k = {k}"))
            };

            // At k = 0 the OOD recall term is exactly zero, so vanilla's
            // reported balanced accuracy is (sum of C in-dist recalls)/(C+1);
            // rescale to the mean in-dist recall.
            let n_in = ood_aware
                .rows
                .iter()
                .find(|r| r.method == "vanilla" && r.ood_count == 0)
                .map(|r| r.report.confusion.n_classes())
                .ok_or_else(|| format!("seed {seed}: no vanilla row at k = 0"))?;
            let window =
                ba(&ood_aware, "vanilla", 0)? * (n_in as f64 + 1.0) / n_in as f64;

            let mut vanilla_accuracies = Vec::new();
            for &k in &ood_aware.ood_counts {
                let mean = ood_aware
                    .means()
                    .into_iter()
                    .find(|m| m.method == "vanilla" && m.ood_count == k)
                    .ok_or_else(|| format!("seed {seed}: no vanilla mean at k = {k}"))?;
                vanilla_accuracies.push(mean.accuracy);
            }
            let strictly_decreasing = vanilla_accuracies
                .windows(2)
                .all(|pair| pair[1] < pair[0]);

            runs.push(SeedRun {
                seed,
                window,
                bh: ba(&ood_aware, "bh", max_k)?,
                vanilla: ba(&ood_aware, "vanilla", max_k)?,
                msp: ba(&ood_aware, "msp", max_k)?,
                degradation: ba(&ood_aware, "bh", max_k)? - ba(&ood_free, "bh", max_k)?,
                vanilla_accuracy_strictly_decreasing: strictly_decreasing,
            });
        }
        Ok((runs, started.elapsed().as_secs_f64()))
    })
}

fn c8() -> Outcome {
    let (runs, secs) = end_to_end().as_ref().map_err(|e| e.clone())?;
    let mean = |f: fn(&SeedRun) -> f64| -> f64 {
        runs.iter().map(f).sum::<f64>() / runs.len() as f64
    };

    let window = mean(|r| r.window);
    if !(0.80..=0.95).contains(&window) {
        return Err(format!(
            "vanilla in-dist balanced accuracy {window:.3} outside the tuned 0.80–0.95 band"
        ));
    }
    let gain = mean(|r| r.bh - r.vanilla);
    if gain < 0.05 {
        return Err(format!(
            "BH led argmax by {gain:.3} at the heaviest contamination, need ≥ 0.05"
        ));
    }
    let msp_wins = runs.iter().filter(|r| r.bh >= r.msp).count();
    if msp_wins < 3 {
        return Err(format!("BH ≥ max-softmax on {msp_wins}/5 seeds, need ≥ 3"));
    }
    if let Some(run) = runs
        .iter()
        .find(|r| !r.vanilla_accuracy_strictly_decreasing)
    {
        return Err(format!(
            "seed {}: vanilla accuracy not strictly decreasing in the OOD count",
            run.seed
        ));
    }
    if *secs >= 600.0 {
        return Err(format!("end-to-end block took {secs:.0}s, bound is 600s"));
    }
    Ok(format!(
        "window {window:.3}, BH − argmax +{gain:.3} (5-seed mean), ≥ max-softmax on {msp_wins}/5, argmax accuracy strictly decreasing"
    ))
}

fn c9() -> Outcome {
    let (runs, _) = end_to_end().as_ref().map_err(|e| e.clone())?;
    let within = runs.iter().filter(|r| r.degradation < 0.05).count();
    let degradations: Vec<String> = runs
        .iter()
        .map(|r| format!("{:+.3}", r.degradation))
        .collect();
    if within < 3 {
        return Err(format!(
            "degradation under 0.05 on only {within}/5 seeds ({})",
            degradations.join(", ")
        ));
    }
    Ok(format!(
        "OOD-free calibration within 0.05 on {within}/5 seeds ({})",
        degradations.join(", ")
    ))
}

// -----------------------------------------------------------------------
// criterion 10: byte-level determinism
// -----------------------------------------------------------------------

fn c10() -> Outcome {
    let config = "\
[data]
total_samples = 1200

[train]
max_epochs = 4

[sweep]
ood_counts = auto
repetitions = 2
";
    let first_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_experiment(config, 3, first_dir.path()).map_err(|e| e.to_string())?;
    run_experiment(config, 3, second_dir.path()).map_err(|e| e.to_string())?;

    let mut csv_names: Vec<String> = std::fs::read_dir(first_dir.path())
        .map_err(|e| e.to_string())?
        .map(|entry| entry.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|name| name.ends_with(".csv"))
        .collect();
    csv_names.sort();
    if csv_names.len() < 8 {
        return Err(format!("only {} CSV artifacts written", csv_names.len()));
    }
    for name in &csv_names {
        let first = std::fs::read(first_dir.path().join(name)).map_err(|e| e.to_string())?;
        let second = std::fs::read(second_dir.path().join(name)).map_err(|e| e.to_string())?;
        if first != second {
            return Err(format!("{name} differs between identical runs"));
        }
    }
    Ok(format!(
        "{} CSV artifacts byte-identical across two identical runs",
        csv_names.len()
    ))
}
