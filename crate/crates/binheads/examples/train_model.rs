//! Train the sigmoid-head network on synthetic clusters and watch the
//! balanced accuracy climb.
//!
//! Run with: cargo run --example train_model

use binheads::data::{generate_synthetic, split_dataset, SyntheticSpec};
use binheads::nnet::{train, HeadKind, MlpConfig, TrainConfig};

fn main() -> binheads::Result<()> {
    let mut spec = SyntheticSpec::eight_class();
    spec.total_samples = 4_000;
    spec.feature_dim = 8;
    spec.seed = 3;
    let data = generate_synthetic(&spec)?;
    let bundle = split_dataset(&data.features, &data.labels, &data.groups, 0.8, 3)?;

    // Validation loss drives the plateau schedule, so give the trainer the
    // in-distribution part of the validation split.
    let keep: Vec<usize> = bundle
        .val
        .labels
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_ood())
        .map(|(i, _)| i)
        .collect();
    let val_features = bundle.val.features.select_rows(&keep);
    let val_labels = bundle.val.labels.filtered(|_, l| !l.is_ood());

    let mlp = MlpConfig {
        input_dim: 8,
        hidden_dims: vec![16],
        n_classes: bundle.train.labels.n_classes(),
        head_kind: HeadKind::BinaryHeads,
    };
    let cfg = TrainConfig {
        max_epochs: 15,
        seed: 1,
        ..Default::default()
    };
    // Weighted sampling (on by default) draws a class uniformly, then a
    // sample of that class, so the 50x-imbalanced classes still get seen.
    let (params, history) = train(
        &bundle.train.features,
        &bundle.train.labels,
        &val_features,
        &val_labels,
        &mlp,
        &cfg,
    )?;

    println!("epoch  train-loss  val-loss  train-bal-acc  val-bal-acc      lr");
    for e in &history {
        println!(
            "{:>5}  {:>10.4}  {:>8.4}  {:>13.3}  {:>11.3}  {:>6.4}",
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.train_balanced_accuracy,
            e.val_balanced_accuracy,
            e.learning_rate,
        );
    }

    let best = history
        .iter()
        .map(|e| e.val_balanced_accuracy)
        .fold(0.0f64, f64::max);
    println!("\nbest validation balanced accuracy: {best:.3}");
    println!(
        "returned parameters have {} layers (trunk + heads)",
        params.layers().len()
    );
    Ok(())
}
