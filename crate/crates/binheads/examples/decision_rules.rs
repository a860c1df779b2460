//! The four decision rules side by side on hand-picked score rows.
//!
//! Run with: cargo run --example decision_rules

use binheads::decision::{bh_predict, energy_predict, msp_predict, vanilla_predict};
use binheads::{Label, ThresholdVector};

fn show(name: &str, prediction: binheads::Prediction) {
    let verdict = match prediction.verdict {
        Label::Class(i) => format!("class {i}"),
        Label::Ood => "OOD".to_string(),
    };
    println!("  {name:<28} -> {verdict:<8} (confidence {:.3})", prediction.confidence);
}

fn main() -> binheads::Result<()> {
    // Per-head gating: a head only competes when its probability strictly
    // exceeds its own threshold; if no head clears its bar, the sample is
    // declared OOD.
    let thresholds = ThresholdVector::new(vec![0.5, 0.5, 0.5])?;
    println!("per-class thresholds = [0.5, 0.5, 0.5]");
    show("bh [0.9, 0.2, 0.1]", bh_predict(&[0.9, 0.2, 0.1], &thresholds)?);
    show("bh [0.4, 0.3, 0.2]", bh_predict(&[0.4, 0.3, 0.2], &thresholds)?);
    // An exact hit on the threshold does not clear it.
    show("bh [0.5, 0.2, 0.1]", bh_predict(&[0.5, 0.2, 0.1], &thresholds)?);
    // Several heads above their bars: the highest probability wins, ties
    // going to the lowest class index.
    show("bh [0.8, 0.9, 0.6]", bh_predict(&[0.8, 0.9, 0.6], &thresholds)?);
    show("bh [0.7, 0.7, 0.1]", bh_predict(&[0.7, 0.7, 0.1], &thresholds)?);

    // Vanilla argmax never rejects, whatever the scores look like.
    println!("\nvanilla argmax");
    show("vanilla [0.4, 0.3, 0.2]", vanilla_predict(&[0.4, 0.3, 0.2])?);

    // Max-softmax-probability: reject when the top probability of a
    // distribution falls below one global threshold.
    println!("\nmsp, global threshold 0.6");
    show("msp [0.7, 0.2, 0.1]", msp_predict(&[0.7, 0.2, 0.1], 0.6)?);
    show("msp [0.5, 0.3, 0.2]", msp_predict(&[0.5, 0.3, 0.2], 0.6)?);

    // Energy: -T * logsumexp(logits / T); high energy means unfamiliar.
    println!("\nenergy, temperature 1, threshold -2.0");
    show(
        "energy [3.0, 0.5, 0.1]",
        energy_predict(&[3.0, 0.5, 0.1], 1.0, -2.0)?,
    );
    show(
        "energy [0.3, 0.2, 0.1]",
        energy_predict(&[0.3, 0.2, 0.1], 1.0, -2.0)?,
    );
    Ok(())
}
