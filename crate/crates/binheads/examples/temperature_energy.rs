//! Temperature scaling and the energy-based OOD detector on raw logits.
//!
//! Fits a softmax temperature on labelled in-distribution logits, shows how
//! energy scores separate familiar inputs from unfamiliar ones, and picks a
//! rejection threshold that maximizes balanced accuracy.
//!
//! Run with: cargo run --example temperature_energy

use binheads::calibrate::{calibrate_global_threshold, fit_temperature, RejectDirection};
use binheads::decision::{energy_score, predict_all, vanilla_predict, DetectorConfig};
use binheads::metrics::{softmax, EvalReport, OodConvention};
use binheads::{Label, LabelVector, ScoreKind, ScoreMatrix};

fn main() -> binheads::Result<()> {
    let names = vec!["cat".into(), "dog".into(), "bird".into()];

    // In-distribution logits: mostly confident and correct, with two
    // over-confident mistakes that temperature scaling should soften.
    let in_dist_rows = vec![
        vec![4.2, 0.3, 0.1],
        vec![3.8, 0.9, 0.2],
        vec![4.5, 0.2, 0.6],
        vec![0.4, 4.1, 0.3],
        vec![0.2, 3.6, 0.8],
        vec![3.2, 0.1, 0.4], // true dog, loudly wrong
        vec![0.3, 0.5, 4.0],
        vec![0.9, 3.1, 0.2], // true bird, loudly wrong
        vec![0.1, 0.7, 3.9],
    ];
    let in_dist_labels = LabelVector::new(
        vec![
            Label::Class(0),
            Label::Class(0),
            Label::Class(0),
            Label::Class(1),
            Label::Class(1),
            Label::Class(1),
            Label::Class(2),
            Label::Class(2),
            Label::Class(2),
        ],
        names.clone(),
    )?;
    let in_dist = ScoreMatrix::from_rows(ScoreKind::Logit, &in_dist_rows)?;

    let temperature = fit_temperature(&in_dist, &in_dist_labels, 0.05, 100.0)?;
    println!("fitted softmax temperature: {temperature:.4}");
    println!("(above 1.0: the raw logits were over-confident on this set)\n");

    // Unfamiliar inputs produce flat, low logits on every head.
    let ood_rows = vec![
        vec![0.4, 0.3, 0.5],
        vec![0.2, 0.6, 0.3],
        vec![0.7, 0.5, 0.4],
    ];

    let mean_energy = |rows: &[Vec<f64>]| -> binheads::Result<f64> {
        let mut total = 0.0;
        for row in rows {
            total += energy_score(row, temperature)?;
        }
        Ok(total / rows.len() as f64)
    };
    println!(
        "mean energy, in-distribution: {:+.3}",
        mean_energy(&in_dist_rows)?
    );
    println!("mean energy, unfamiliar:      {:+.3}", mean_energy(&ood_rows)?);
    println!("(higher energy = the model recognizes nothing in the input)\n");

    // Calibrate the rejection threshold on the combined set: a sample is
    // rejected when its energy is strictly above the threshold.
    let all_rows: Vec<Vec<f64>> = in_dist_rows.iter().chain(&ood_rows).cloned().collect();
    let mut labels = in_dist_labels.labels().to_vec();
    labels.extend([Label::Ood; 3]);
    let all_labels = LabelVector::new(labels, names)?;

    let mut energies = Vec::new();
    let mut preds_if_accepted = Vec::new();
    for row in &all_rows {
        energies.push(energy_score(row, temperature)?);
        preds_if_accepted.push(vanilla_predict(&softmax(row, temperature)?)?);
    }
    let (threshold, objective) = calibrate_global_threshold(
        &energies,
        &preds_if_accepted,
        &all_labels,
        RejectDirection::RejectAbove,
        OodConvention::AssumeZeroWhenAbsent,
    )?;
    println!("calibrated energy threshold: {threshold:+.3} (balanced accuracy {objective:.3})");

    let detector = DetectorConfig::Energy {
        global_threshold: threshold,
        temperature,
    };
    let logits = ScoreMatrix::from_rows(ScoreKind::Logit, &all_rows)?;
    let preds = predict_all(&logits, &detector)?;
    let report =
        EvalReport::from_predictions(&preds, &all_labels, OodConvention::AssumeZeroWhenAbsent)?;
    println!(
        "energy detector on the full set: accuracy {:.3}, balanced accuracy {:.3}",
        report.accuracy, report.balanced_accuracy
    );
    println!(
        "OOD recall {:.3} (last per-class recall entry)",
        report.per_class_recall.last().unwrap()
    );
    Ok(())
}
