//! The experiment pipeline behind the CLI: gen-data → train → calibrate →
//! sweep → report, plus a standalone full-test evaluation.
//!
//! Every stage reads its inputs from and writes its artifacts to one
//! output directory, so the stages can run in a single process
//! ([`run_experiment`]) or as separate CLI invocations against the same
//! directory. Failures are tagged with the stage name; artifacts written
//! before the failure are left in place.
//!
//! Artifacts:
//!
//! | file | producer | contents |
//! |---|---|---|
//! | `data_{train,val,test}.csv` | gen-data | feature CSVs per split |
//! | `params_{bh,softmax}.bin` | train | model parameters |
//! | `history_{bh,softmax}.csv` | train | per-epoch losses and accuracies |
//! | `scores_{bh,softmax}_val.csv` | calibrate | validation-set scores |
//! | `thresholds.csv` | calibrate | per-class and global thresholds |
//! | `scores_{bh,softmax}_test.csv` | sweep | test-set scores |
//! | `sweep.csv` | sweep | per-(method, k, repetition) metrics |
//! | `confusion_<method>.csv` | sweep | confusion at the largest k |
//! | `eval.csv` | eval | full-test metrics per method |
//! | `compare.csv`, `*.svg`, `manifest.json` | report | aggregated outputs |

use std::path::Path;

use serde::Serialize;

use crate::calibrate::{
    calibrate_global_threshold, coordinate_descent, fit_temperature, RejectDirection,
};
use crate::data::{
    generate_synthetic, load_features_csv, save_features_csv, save_scores_csv, split_dataset,
    DatasetBundle, SplitData,
};
use crate::decision::{predict_all, vanilla_predict, DetectorConfig};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::metrics::{softmax, EvalReport, OodConvention};
use crate::nnet::{score_dataset, train, EpochStats, HeadKind, MlpConfig, ModelParams};
use crate::types::{Label, LabelVector, Prediction, ScoreMatrix, ThresholdVector};

use super::config::{config_hash, ExperimentConfig, MethodName, Seeds};
use super::report::{
    compare_csv, confusion_csv, eval_csv, parse_sweep_csv, render_line_chart, sweep_csv,
    ChartSeries,
};
use super::sweep::{aggregate_points, ood_sweep, SweepConfig, SweepMean, SweepMethod, SweepResult};

pub const DATA_TRAIN: &str = "data_train.csv";
pub const DATA_VAL: &str = "data_val.csv";
pub const DATA_TEST: &str = "data_test.csv";
pub const PARAMS_BH: &str = "params_bh.bin";
pub const PARAMS_SOFTMAX: &str = "params_softmax.bin";
pub const HISTORY_BH: &str = "history_bh.csv";
pub const HISTORY_SOFTMAX: &str = "history_softmax.csv";
pub const SCORES_BH_VAL: &str = "scores_bh_val.csv";
pub const SCORES_SOFTMAX_VAL: &str = "scores_softmax_val.csv";
pub const SCORES_BH_TEST: &str = "scores_bh_test.csv";
pub const SCORES_SOFTMAX_TEST: &str = "scores_softmax_test.csv";
pub const THRESHOLDS: &str = "thresholds.csv";
pub const SWEEP: &str = "sweep.csv";
pub const EVAL: &str = "eval.csv";
pub const COMPARE: &str = "compare.csv";
pub const ACCURACY_SVG: &str = "accuracy.svg";
pub const BALANCED_ACCURACY_SVG: &str = "balanced_accuracy.svg";
pub const MANIFEST: &str = "manifest.json";

/// Temperature search bounds for the energy detector's scaling.
const TEMP_MIN: f64 = 0.05;
const TEMP_MAX: f64 = 100.0;

/// The two networks an experiment trains: the sigmoid-head model and the
/// softmax competitor, identical except for the head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub bh: ModelParams,
    pub softmax: ModelParams,
}

/// Everything the calibrate stage fits.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedDetectors {
    pub bh_thresholds: ThresholdVector,
    pub msp_threshold: f64,
    pub energy_temperature: f64,
    pub energy_threshold: f64,
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn in_dist_indices(labels: &LabelVector) -> Vec<usize> {
    labels
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_ood())
        .map(|(i, _)| i)
        .collect()
}

fn subset_scores(scores: &ScoreMatrix, idx: &[usize]) -> Result<ScoreMatrix> {
    let mut values = Vec::with_capacity(idx.len() * scores.n_classes());
    for &i in idx {
        values.extend_from_slice(scores.row(i));
    }
    ScoreMatrix::new(scores.kind(), scores.n_classes(), values)
}

fn max_entry(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Per-class score floors for starting a descent on an OOD-free calibration
/// set: each class's gate starts at the candidate midpoint just below the
/// lowest score the class's own rows reach on their own head. No
/// in-distribution row lies under the floor, so the descent (which only
/// accepts strict improvements) keeps or raises it, and an input scoring
/// below every class's floor is rejected even though no rejectable example
/// was ever seen. A class with no calibration rows keeps an open gate.
fn in_dist_floor_init(scores: &ScoreMatrix, labels: &LabelVector) -> Result<ThresholdVector> {
    let n_classes = labels.n_classes();
    let mut floors = vec![0.0; n_classes];
    for (class, floor) in floors.iter_mut().enumerate() {
        let mut own_min = f64::INFINITY;
        for (row, label) in scores.rows().zip(labels.labels()) {
            if *label == Label::Class(class) {
                own_min = own_min.min(row[class]);
            }
        }
        if !own_min.is_finite() {
            continue;
        }
        // Largest score in the column strictly below the class's own minimum;
        // the midpoint between the two is exactly the threshold candidate the
        // descent itself would consider there.
        let mut below = f64::NEG_INFINITY;
        for row in scores.rows() {
            if row[class] < own_min {
                below = below.max(row[class]);
            }
        }
        *floor = if below.is_finite() {
            (below + own_min) / 2.0
        } else {
            own_min / 2.0
        };
    }
    ThresholdVector::new(floors)
}

// ---------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------

/// Generate the synthetic dataset and write the three split CSVs.
pub fn gen_data_stage(cfg: &ExperimentConfig, seeds: Seeds, out: &Path) -> Result<DatasetBundle> {
    gen_data_inner(cfg, seeds, out).map_err(|e| e.in_stage("gen-data"))
}

fn gen_data_inner(cfg: &ExperimentConfig, seeds: Seeds, out: &Path) -> Result<DatasetBundle> {
    std::fs::create_dir_all(out)?;
    let spec = cfg.data.to_spec(seeds.data);
    let data = generate_synthetic(&spec)?;
    let bundle = split_dataset(
        &data.features,
        &data.labels,
        &data.groups,
        cfg.data.train_frac,
        seeds.data,
    )?;
    for (file, prefix, split) in [
        (DATA_TRAIN, "tr", &bundle.train),
        (DATA_VAL, "va", &bundle.val),
        (DATA_TEST, "te", &bundle.test),
    ] {
        save_features_csv(
            &out.join(file),
            &split.features,
            &split.labels,
            &split.groups,
            &ids(prefix, split.labels.len()),
        )?;
    }
    Ok(bundle)
}

/// Read the three split CSVs back into a bundle.
pub fn load_bundle(out: &Path) -> Result<DatasetBundle> {
    let mut splits = Vec::new();
    for file in [DATA_TRAIN, DATA_VAL, DATA_TEST] {
        let (features, labels, groups) = load_features_csv(&out.join(file))?;
        splits.push(SplitData {
            features,
            labels,
            groups,
        });
    }
    let test = splits.pop().expect("three splits");
    let val = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    if train.labels.class_names() != val.labels.class_names()
        || train.labels.class_names() != test.labels.class_names()
    {
        return Err(Error::format(
            "split CSVs disagree on class names; regenerate the data",
        ));
    }
    Ok(DatasetBundle { train, val, test })
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

fn history_csv(history: &[EpochStats]) -> String {
    use crate::data::fmt_real as r;
    let mut out = String::from(
        "epoch,train_loss,val_loss,train_balanced_accuracy,val_balanced_accuracy,learning_rate\n",
    );
    for e in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            r(e.train_loss),
            r(e.val_loss),
            r(e.train_balanced_accuracy),
            r(e.val_balanced_accuracy),
            r(e.learning_rate),
        ));
    }
    out
}

/// Train the sigmoid-head model and the softmax competitor on the train
/// split, validating on the in-distribution part of the validation split.
/// Both models share the trunk architecture and the training seed.
pub fn train_stage(
    cfg: &ExperimentConfig,
    seeds: Seeds,
    out: &Path,
    bundle: &DatasetBundle,
) -> Result<TrainedModels> {
    train_inner(cfg, seeds, out, bundle).map_err(|e| e.in_stage("train"))
}

fn train_inner(
    cfg: &ExperimentConfig,
    seeds: Seeds,
    out: &Path,
    bundle: &DatasetBundle,
) -> Result<TrainedModels> {
    std::fs::create_dir_all(out)?;
    let val_idx = in_dist_indices(&bundle.val.labels);
    let val_features = bundle.val.features.select_rows(&val_idx);
    let val_labels = bundle.val.labels.filtered(|_, l| !l.is_ood());
    let train_cfg = cfg.train.to_train_config(seeds.train);

    let mut models = Vec::new();
    for (head_kind, params_file, history_file) in [
        (HeadKind::BinaryHeads, PARAMS_BH, HISTORY_BH),
        (HeadKind::Softmax, PARAMS_SOFTMAX, HISTORY_SOFTMAX),
    ] {
        let mlp = MlpConfig {
            input_dim: bundle.train.features.n_features(),
            hidden_dims: cfg.model.hidden_dims.clone(),
            n_classes: bundle.train.labels.n_classes(),
            head_kind,
        };
        let (params, history) = train(
            &bundle.train.features,
            &bundle.train.labels,
            &val_features,
            &val_labels,
            &mlp,
            &train_cfg,
        )?;
        params.save(&out.join(params_file))?;
        atomic_write(&out.join(history_file), history_csv(&history).as_bytes())?;
        models.push(params);
    }
    let softmax_params = models.pop().expect("two models");
    let bh_params = models.pop().expect("two models");
    Ok(TrainedModels {
        bh: bh_params,
        softmax: softmax_params,
    })
}

/// Load both trained models, checking each file holds the right head kind.
pub fn load_models(out: &Path) -> Result<TrainedModels> {
    let bh = ModelParams::load(&out.join(PARAMS_BH))?;
    let softmax = ModelParams::load(&out.join(PARAMS_SOFTMAX))?;
    if bh.config().head_kind != HeadKind::BinaryHeads {
        return Err(Error::format(format!(
            "{PARAMS_BH} does not hold a sigmoid-head model"
        )));
    }
    if softmax.config().head_kind != HeadKind::Softmax {
        return Err(Error::format(format!(
            "{PARAMS_SOFTMAX} does not hold a softmax model"
        )));
    }
    Ok(TrainedModels { bh, softmax })
}

// ---------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------

fn thresholds_csv(class_names: &[String], cal: &CalibratedDetectors) -> String {
    use crate::data::fmt_real as r;
    let mut out = String::from("name,value\n");
    for (name, t) in class_names.iter().zip(cal.bh_thresholds.as_slice()) {
        out.push_str(&format!("bh:{name},{}\n", r(*t)));
    }
    out.push_str(&format!("msp:global,{}\n", r(cal.msp_threshold)));
    out.push_str(&format!(
        "energy:temperature,{}\n",
        r(cal.energy_temperature)
    ));
    out.push_str(&format!("energy:global,{}\n", r(cal.energy_threshold)));
    out
}

/// Read `thresholds.csv` back, validating it covers exactly the given
/// classes plus the global entries.
pub fn load_calibrated(out: &Path, class_names: &[String]) -> Result<CalibratedDetectors> {
    let raw = std::fs::read_to_string(out.join(THRESHOLDS))?;
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, "name,value")) => {}
        Some((_, other)) => {
            return Err(Error::parse(1, format!("unexpected header '{other}'")));
        }
        None => return Err(Error::parse(1, "empty thresholds file")),
    }
    let mut entries: Vec<(String, f64)> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let (name, value) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(line_no, format!("expected 'name,value', got '{line}'")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad number '{value}'")))?;
        if entries.iter().any(|(n, _)| n == name) {
            return Err(Error::parse(line_no, format!("duplicate entry '{name}'")));
        }
        entries.push((name.to_string(), value));
    }
    let get = |key: String| -> Result<f64> {
        entries
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::format(format!("{THRESHOLDS} is missing entry '{key}'")))
    };
    let mut thresholds = Vec::with_capacity(class_names.len());
    for name in class_names {
        thresholds.push(get(format!("bh:{name}"))?);
    }
    let cal = CalibratedDetectors {
        bh_thresholds: ThresholdVector::new(thresholds)?,
        msp_threshold: get("msp:global".into())?,
        energy_temperature: get("energy:temperature".into())?,
        energy_threshold: get("energy:global".into())?,
    };
    if entries.len() != class_names.len() + 3 {
        return Err(Error::format(format!(
            "{THRESHOLDS} holds {} entries, expected {}",
            entries.len(),
            class_names.len() + 3
        )));
    }
    Ok(cal)
}

/// Fit every detector on the validation split: per-class thresholds by
/// coordinate descent from all-zero, the MSP global threshold, the energy
/// temperature (by validation likelihood on in-distribution samples) and
/// the energy global threshold. With `convention = in_dist_only` the
/// OOD rows of the validation set are excluded and thresholds optimize
/// in-distribution recalls only (the OOD-free calibration mode).
pub fn calibrate_stage(
    cfg: &ExperimentConfig,
    seeds: Seeds,
    out: &Path,
    bundle: &DatasetBundle,
    models: &TrainedModels,
) -> Result<CalibratedDetectors> {
    calibrate_inner(cfg, seeds, out, bundle, models).map_err(|e| e.in_stage("calibrate"))
}

fn calibrate_inner(
    cfg: &ExperimentConfig,
    seeds: Seeds,
    out: &Path,
    bundle: &DatasetBundle,
    models: &TrainedModels,
) -> Result<CalibratedDetectors> {
    std::fs::create_dir_all(out)?;
    let val = &bundle.val;
    let bh_scores = score_dataset(&models.bh, &val.features)?;
    let softmax_logits = score_dataset(&models.softmax, &val.features)?;
    let row_ids = ids("va", val.labels.len());
    save_scores_csv(&out.join(SCORES_BH_VAL), &bh_scores, &val.labels, &row_ids)?;
    save_scores_csv(
        &out.join(SCORES_SOFTMAX_VAL),
        &softmax_logits,
        &val.labels,
        &row_ids,
    )?;

    let convention = cfg.calibrate.convention;
    // The calibration set: the whole validation split, or only its
    // in-distribution part in the OOD-free mode.
    let (cal_scores, cal_logits, cal_labels) = match convention {
        OodConvention::AssumeZeroWhenAbsent => {
            (bh_scores.clone(), softmax_logits.clone(), val.labels.clone())
        }
        OodConvention::InDistOnly => {
            let idx = in_dist_indices(&val.labels);
            (
                subset_scores(&bh_scores, &idx)?,
                subset_scores(&softmax_logits, &idx)?,
                val.labels.filtered(|_, l| !l.is_ood()),
            )
        }
    };

    // Descent starts depend on the calibration mode. With OOD rows present,
    // all-zero is vanilla-equivalent (its result can never fall below plain
    // argmax on the calibration set) and all-one starts from
    // reject-everything, reaching jointly-gated optima that
    // single-coordinate moves cannot assemble from the open state (closing
    // one head never creates an OOD verdict while every other head still
    // fires); the better calibration wins, ties favouring the safe start.
    // Without OOD rows the objective cannot see gating at all, so the start
    // carries the rejection behaviour: per-class score floors sit below every
    // calibration row, the sweep finds nothing to recover beneath them and
    // keeps (or raises) each gate, and inputs scoring under every floor are
    // still rejected at test time.
    let n_classes = val.labels.n_classes();
    let inits = match convention {
        OodConvention::AssumeZeroWhenAbsent => vec![
            ThresholdVector::zeros(n_classes),
            ThresholdVector::ones(n_classes),
        ],
        OodConvention::InDistOnly => vec![in_dist_floor_init(&cal_scores, &cal_labels)?],
    };
    let mut bh_thresholds: Option<(ThresholdVector, f64)> = None;
    for init in inits {
        let (candidate, _) = coordinate_descent(
            &cal_scores,
            &cal_labels,
            &init,
            seeds.calibrate,
            cfg.calibrate.max_rounds,
            convention,
        )?;
        let preds = predict_all(
            &cal_scores,
            &DetectorConfig::BhThreshold {
                thresholds: candidate.clone(),
            },
        )?;
        let objective =
            EvalReport::from_predictions(&preds, &cal_labels, convention)?.balanced_accuracy;
        if bh_thresholds.as_ref().map_or(true, |(_, best)| objective > *best) {
            bh_thresholds = Some((candidate, objective));
        }
    }
    let (bh_thresholds, _) = bh_thresholds.expect("two descent starts evaluated");

    // Temperature always fits on in-distribution validation likelihood.
    let idx = in_dist_indices(&val.labels);
    let in_dist_logits = subset_scores(&softmax_logits, &idx)?;
    let in_dist_labels = val.labels.filtered(|_, l| !l.is_ood());
    let temperature = fit_temperature(&in_dist_logits, &in_dist_labels, TEMP_MIN, TEMP_MAX)?;

    // MSP: reject when the top softmax probability (T = 1) is low.
    let mut msp_values = Vec::with_capacity(cal_labels.len());
    let mut msp_preds: Vec<Prediction> = Vec::with_capacity(cal_labels.len());
    for row in cal_logits.rows() {
        let probs = softmax(row, 1.0)?;
        msp_values.push(max_entry(&probs));
        msp_preds.push(vanilla_predict(&probs)?);
    }
    let (msp_threshold, _) = calibrate_global_threshold(
        &msp_values,
        &msp_preds,
        &cal_labels,
        RejectDirection::RejectBelow,
        convention,
    )?;

    // Energy: reject when −T·logsumexp(logits/T) is high.
    let mut energy_values = Vec::with_capacity(cal_labels.len());
    let mut energy_preds: Vec<Prediction> = Vec::with_capacity(cal_labels.len());
    for row in cal_logits.rows() {
        energy_values.push(crate::decision::energy_score(row, temperature)?);
        let probs = softmax(row, temperature)?;
        energy_preds.push(vanilla_predict(&probs)?);
    }
    let (energy_threshold, _) = calibrate_global_threshold(
        &energy_values,
        &energy_preds,
        &cal_labels,
        RejectDirection::RejectAbove,
        convention,
    )?;

    let cal = CalibratedDetectors {
        bh_thresholds,
        msp_threshold,
        energy_temperature: temperature,
        energy_threshold,
    };
    atomic_write(
        &out.join(THRESHOLDS),
        thresholds_csv(val.labels.class_names(), &cal).as_bytes(),
    )?;
    Ok(cal)
}

// ---------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------

fn build_methods(
    cfg: &ExperimentConfig,
    cal: &CalibratedDetectors,
    bh_in_dist: &ScoreMatrix,
    bh_ood: &ScoreMatrix,
    logit_in_dist: &ScoreMatrix,
    logit_ood: &ScoreMatrix,
) -> Vec<SweepMethod> {
    cfg.sweep
        .methods
        .iter()
        .map(|m| match m {
            MethodName::Bh => SweepMethod {
                name: m.as_str().into(),
                detector: DetectorConfig::BhThreshold {
                    thresholds: cal.bh_thresholds.clone(),
                },
                in_dist_scores: bh_in_dist.clone(),
                ood_scores: bh_ood.clone(),
            },
            MethodName::Vanilla => SweepMethod {
                name: m.as_str().into(),
                detector: DetectorConfig::VanillaArgmax,
                in_dist_scores: bh_in_dist.clone(),
                ood_scores: bh_ood.clone(),
            },
            MethodName::Msp => SweepMethod {
                name: m.as_str().into(),
                detector: DetectorConfig::MaxSoftmaxProb {
                    global_threshold: cal.msp_threshold,
                },
                in_dist_scores: logit_in_dist.clone(),
                ood_scores: logit_ood.clone(),
            },
            MethodName::Energy => SweepMethod {
                name: m.as_str().into(),
                detector: DetectorConfig::Energy {
                    global_threshold: cal.energy_threshold,
                    temperature: cal.energy_temperature,
                },
                in_dist_scores: logit_in_dist.clone(),
                ood_scores: logit_ood.clone(),
            },
        })
        .collect()
}

/// Score the test split, run the OOD-count sweep over the configured
/// methods, and write `sweep.csv` plus one confusion matrix per method at
/// the largest evaluated count.
pub fn sweep_stage(
    cfg: &ExperimentConfig,
    seeds: Seeds,
    out: &Path,
    bundle: &DatasetBundle,
    models: &TrainedModels,
    cal: &CalibratedDetectors,
) -> Result<SweepResult> {
    sweep_inner(cfg, seeds, out, bundle, models, cal).map_err(|e| e.in_stage("sweep"))
}

fn sweep_inner(
    cfg: &ExperimentConfig,
    seeds: Seeds,
    out: &Path,
    bundle: &DatasetBundle,
    models: &TrainedModels,
    cal: &CalibratedDetectors,
) -> Result<SweepResult> {
    std::fs::create_dir_all(out)?;
    let test = &bundle.test;
    let bh_scores = score_dataset(&models.bh, &test.features)?;
    let softmax_logits = score_dataset(&models.softmax, &test.features)?;
    let row_ids = ids("te", test.labels.len());
    save_scores_csv(&out.join(SCORES_BH_TEST), &bh_scores, &test.labels, &row_ids)?;
    save_scores_csv(
        &out.join(SCORES_SOFTMAX_TEST),
        &softmax_logits,
        &test.labels,
        &row_ids,
    )?;

    let mut in_idx = Vec::new();
    let mut ood_idx = Vec::new();
    for (i, label) in test.labels.labels().iter().enumerate() {
        if label.is_ood() {
            ood_idx.push(i);
        } else {
            in_idx.push(i);
        }
    }
    let in_dist_labels = test.labels.filtered(|_, l| !l.is_ood());
    let methods = build_methods(
        cfg,
        cal,
        &subset_scores(&bh_scores, &in_idx)?,
        &subset_scores(&bh_scores, &ood_idx)?,
        &subset_scores(&softmax_logits, &in_idx)?,
        &subset_scores(&softmax_logits, &ood_idx)?,
    );
    let sweep_cfg = SweepConfig {
        ood_counts: cfg.sweep.ood_counts.resolve(ood_idx.len())?,
        repetitions: cfg.sweep.repetitions,
        seed: seeds.sweep,
    };
    let result = ood_sweep(&in_dist_labels, &methods, &sweep_cfg)?;
    atomic_write(&out.join(SWEEP), sweep_csv(&result).as_bytes())?;

    let max_k = *sweep_cfg.ood_counts.iter().max().expect("non-empty grid");
    for name in &result.method_names {
        let report = result
            .report_for(name, max_k, 0)
            .expect("row exists for every cell");
        let csv = confusion_csv(&report.confusion, test.labels.class_names())?;
        atomic_write(&out.join(format!("confusion_{name}.csv")), csv.as_bytes())?;
    }
    Ok(result)
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

/// Evaluate every configured method on the full test split (all OOD
/// samples present) and write `eval.csv`.
pub fn eval_stage(
    cfg: &ExperimentConfig,
    out: &Path,
    bundle: &DatasetBundle,
    models: &TrainedModels,
    cal: &CalibratedDetectors,
) -> Result<Vec<(String, EvalReport)>> {
    eval_inner(cfg, out, bundle, models, cal).map_err(|e| e.in_stage("eval"))
}

fn eval_inner(
    cfg: &ExperimentConfig,
    out: &Path,
    bundle: &DatasetBundle,
    models: &TrainedModels,
    cal: &CalibratedDetectors,
) -> Result<Vec<(String, EvalReport)>> {
    std::fs::create_dir_all(out)?;
    let test = &bundle.test;
    let bh_scores = score_dataset(&models.bh, &test.features)?;
    let softmax_logits = score_dataset(&models.softmax, &test.features)?;
    let mut reports = Vec::new();
    for m in &cfg.sweep.methods {
        let (detector, scores) = match m {
            MethodName::Bh => (
                DetectorConfig::BhThreshold {
                    thresholds: cal.bh_thresholds.clone(),
                },
                &bh_scores,
            ),
            MethodName::Vanilla => (DetectorConfig::VanillaArgmax, &bh_scores),
            MethodName::Msp => (
                DetectorConfig::MaxSoftmaxProb {
                    global_threshold: cal.msp_threshold,
                },
                &softmax_logits,
            ),
            MethodName::Energy => (
                DetectorConfig::Energy {
                    global_threshold: cal.energy_threshold,
                    temperature: cal.energy_temperature,
                },
                &softmax_logits,
            ),
        };
        let preds = predict_all(scores, &detector)?;
        let report = EvalReport::from_predictions(
            &preds,
            &test.labels,
            OodConvention::AssumeZeroWhenAbsent,
        )?;
        reports.push((m.as_str().to_string(), report));
    }
    atomic_write(&out.join(EVAL), eval_csv(&reports).as_bytes())?;
    Ok(reports)
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct ManifestSeeds {
    data: u64,
    train: u64,
    calibrate: u64,
    sweep: u64,
}

#[derive(Serialize)]
struct Manifest {
    config_sha256: String,
    master_seed: u64,
    seeds: ManifestSeeds,
    artifacts: Vec<String>,
}

fn chart_from_means(
    means: &[SweepMean],
    method_order: &[String],
    metric: impl Fn(&SweepMean) -> f64,
    title: &str,
    y_label: &str,
) -> Result<String> {
    let series: Vec<ChartSeries> = method_order
        .iter()
        .map(|name| ChartSeries {
            name: name.clone(),
            points: means
                .iter()
                .filter(|m| &m.method == name)
                .map(|m| (m.ood_count as f64, metric(m)))
                .collect(),
        })
        .collect();
    render_line_chart(title, "OOD samples in test set", y_label, &series)
}

fn report_files(
    out: &Path,
    means: &[SweepMean],
    method_order: &[String],
    config_text: &str,
    master_seed: u64,
    seeds: Seeds,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    atomic_write(&out.join(COMPARE), compare_csv(means).as_bytes())?;
    let accuracy_chart = chart_from_means(
        means,
        method_order,
        |m| m.accuracy,
        "Accuracy vs OOD count",
        "accuracy",
    )?;
    atomic_write(&out.join(ACCURACY_SVG), accuracy_chart.as_bytes())?;
    let ba_chart = chart_from_means(
        means,
        method_order,
        |m| m.balanced_accuracy,
        "Balanced accuracy vs OOD count",
        "balanced accuracy",
    )?;
    atomic_write(&out.join(BALANCED_ACCURACY_SVG), ba_chart.as_bytes())?;

    let mut artifacts: Vec<String> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n != MANIFEST)
        .collect();
    artifacts.sort();
    let manifest = Manifest {
        config_sha256: config_hash(config_text),
        master_seed,
        seeds: ManifestSeeds {
            data: seeds.data,
            train: seeds.train,
            calibrate: seeds.calibrate,
            sweep: seeds.sweep,
        },
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(format!("manifest serialization: {e}")))?;
    atomic_write(&out.join(MANIFEST), format!("{json}\n").as_bytes())?;
    Ok(())
}

/// Write the aggregated comparison table, the two SVG charts, and the run
/// manifest (seeds + config hash + artifact list).
pub fn report_stage(
    out: &Path,
    result: &SweepResult,
    config_text: &str,
    master_seed: u64,
    seeds: Seeds,
) -> Result<()> {
    report_files(
        out,
        &result.means(),
        &result.method_names,
        config_text,
        master_seed,
        seeds,
    )
    .map_err(|e| e.in_stage("report"))
}

// ---------------------------------------------------------------------
// whole pipeline + CLI entry points
// ---------------------------------------------------------------------

/// Run every stage in order against one output directory and return the
/// sweep result. Identical config and seed produce byte-identical
/// artifacts.
pub fn run_experiment(config_text: &str, master_seed: u64, out: &Path) -> Result<SweepResult> {
    let cfg = ExperimentConfig::parse(config_text)?;
    let seeds = cfg.seeds(master_seed);
    let bundle = gen_data_stage(&cfg, seeds, out)?;
    let models = train_stage(&cfg, seeds, out, &bundle)?;
    let cal = calibrate_stage(&cfg, seeds, out, &bundle, &models)?;
    let result = sweep_stage(&cfg, seeds, out, &bundle, &models, &cal)?;
    report_stage(out, &result, config_text, master_seed, seeds)?;
    Ok(result)
}

pub fn cli_gen_data(config_text: &str, master_seed: u64, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::parse(config_text)?;
    gen_data_stage(&cfg, cfg.seeds(master_seed), out)?;
    Ok(())
}

pub fn cli_train(config_text: &str, master_seed: u64, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::parse(config_text)?;
    let bundle = load_bundle(out).map_err(|e| e.in_stage("train"))?;
    train_stage(&cfg, cfg.seeds(master_seed), out, &bundle)?;
    Ok(())
}

pub fn cli_calibrate(config_text: &str, master_seed: u64, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::parse(config_text)?;
    let stage = |e: Error| e.in_stage("calibrate");
    let bundle = load_bundle(out).map_err(stage)?;
    let models = load_models(out).map_err(stage)?;
    calibrate_stage(&cfg, cfg.seeds(master_seed), out, &bundle, &models)?;
    Ok(())
}

pub fn cli_eval(config_text: &str, _master_seed: u64, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::parse(config_text)?;
    let stage = |e: Error| e.in_stage("eval");
    let bundle = load_bundle(out).map_err(stage)?;
    let models = load_models(out).map_err(stage)?;
    let cal = load_calibrated(out, bundle.class_names()).map_err(stage)?;
    eval_stage(&cfg, out, &bundle, &models, &cal)?;
    Ok(())
}

pub fn cli_sweep(config_text: &str, master_seed: u64, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::parse(config_text)?;
    let stage = |e: Error| e.in_stage("sweep");
    let bundle = load_bundle(out).map_err(stage)?;
    let models = load_models(out).map_err(stage)?;
    let cal = load_calibrated(out, bundle.class_names()).map_err(stage)?;
    sweep_stage(&cfg, cfg.seeds(master_seed), out, &bundle, &models, &cal)?;
    Ok(())
}

/// Rebuild the aggregated report from `sweep.csv` alone, so the report
/// stage can rerun without repeating the sweep.
pub fn cli_report(config_text: &str, master_seed: u64, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::parse(config_text)?;
    let seeds = cfg.seeds(master_seed);
    let inner = || -> Result<()> {
        let raw = std::fs::read_to_string(out.join(SWEEP))?;
        let (points, methods, counts) = parse_sweep_csv(&raw)?;
        let means = aggregate_points(&points, &methods, &counts);
        report_files(out, &means, &methods, config_text, master_seed, seeds)
    };
    inner().map_err(|e| e.in_stage("report"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::OodCountSpec;

    /// A config small enough for tests: 4-dimensional features, well
    /// separated clusters, a few epochs.
    fn small_config() -> String {
        "\
[data]
total_samples = 1200
feature_dim = 4
cluster_separation = 4.0
groups_per_class = 6
[model]
hidden_dims = 8
[train]
max_epochs = 4
batch_size = 16
[calibrate]
max_rounds = 4
[sweep]
ood_counts = 0,20,40
"
        .to_string()
    }

    #[test]
    fn pipeline_produces_all_artifacts_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let config = small_config();
        let result_a = run_experiment(&config, 7, &out_a).unwrap();
        let result_b = run_experiment(&config, 7, &out_b).unwrap();
        assert_eq!(result_a, result_b);

        let expected = [
            DATA_TRAIN,
            DATA_VAL,
            DATA_TEST,
            PARAMS_BH,
            PARAMS_SOFTMAX,
            HISTORY_BH,
            HISTORY_SOFTMAX,
            SCORES_BH_VAL,
            SCORES_SOFTMAX_VAL,
            SCORES_BH_TEST,
            SCORES_SOFTMAX_TEST,
            THRESHOLDS,
            SWEEP,
            "confusion_bh.csv",
            "confusion_vanilla.csv",
            "confusion_msp.csv",
            "confusion_energy.csv",
            COMPARE,
            ACCURACY_SVG,
            BALANCED_ACCURACY_SVG,
            MANIFEST,
        ];
        for file in expected {
            let a = std::fs::read(out_a.join(file)).unwrap_or_else(|_| panic!("missing {file}"));
            let b = std::fs::read(out_b.join(file)).unwrap();
            assert_eq!(a, b, "artifact {file} differs between identical runs");
        }
        // 4 methods x 3 counts x 1 repetition.
        assert_eq!(result_a.rows.len(), 12);
    }

    #[test]
    fn staged_cli_path_matches_single_process_run() {
        let dir = tempfile::tempdir().unwrap();
        let out_run = dir.path().join("run");
        let out_cli = dir.path().join("cli");
        let config = small_config();
        run_experiment(&config, 3, &out_run).unwrap();
        cli_gen_data(&config, 3, &out_cli).unwrap();
        cli_train(&config, 3, &out_cli).unwrap();
        cli_calibrate(&config, 3, &out_cli).unwrap();
        cli_sweep(&config, 3, &out_cli).unwrap();
        cli_report(&config, 3, &out_cli).unwrap();
        for file in [DATA_TRAIN, THRESHOLDS, SWEEP, COMPARE, MANIFEST] {
            let a = std::fs::read(out_run.join(file)).unwrap();
            let b = std::fs::read(out_cli.join(file)).unwrap();
            assert_eq!(a, b, "artifact {file} differs between run and staged CLI");
        }
    }

    #[test]
    fn calibrated_thresholds_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let config = small_config();
        let cfg = ExperimentConfig::parse(&config).unwrap();
        let seeds = cfg.seeds(1);
        let bundle = gen_data_stage(&cfg, seeds, out).unwrap();
        let models = train_stage(&cfg, seeds, out, &bundle).unwrap();
        let cal = calibrate_stage(&cfg, seeds, out, &bundle, &models).unwrap();
        let loaded = load_calibrated(out, bundle.class_names()).unwrap();
        assert_eq!(cal, loaded);
    }

    #[test]
    fn ood_free_sweep_config_gives_single_point() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let mut config = small_config();
        config = config.replace("ood_counts = 0,20,40", "ood_counts = 0");
        let result = run_experiment(&config, 5, out).unwrap();
        assert_eq!(result.ood_counts, vec![0]);
        assert_eq!(result.rows.len(), 4);
        // Every method's confusion matrix at "max k" is the k=0 one.
        let raw = std::fs::read_to_string(out.join("confusion_bh.csv")).unwrap();
        let ood_row = raw.lines().last().unwrap();
        let total: u64 = ood_row
            .split(',')
            .skip(1)
            .map(|v| v.parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 0, "no true OOD rows at k = 0");
    }

    #[test]
    fn stage_errors_carry_stage_tags() {
        let dir = tempfile::tempdir().unwrap();
        // train before gen-data: the bundle files are missing.
        let err = cli_train(&small_config(), 0, dir.path()).unwrap_err();
        assert!(err.to_string().contains("train"), "{err}");
        assert_eq!(err.exit_code(), 3);

        // Config errors surface as exit code 2 regardless of stage.
        let err = cli_gen_data("[data]\nbogus = 1\n", 0, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn auto_grid_resolves_against_test_pool() {
        let cfg = ExperimentConfig::parse(&small_config()).unwrap();
        assert_eq!(
            cfg.sweep.ood_counts,
            OodCountSpec::Explicit(vec![0, 20, 40])
        );
        let auto = ExperimentConfig::parse("").unwrap();
        assert_eq!(auto.sweep.ood_counts, OodCountSpec::Auto);
    }
}
