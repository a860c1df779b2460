//! Generate the eight-class imbalanced dataset and split it by group.
//!
//! Run with: cargo run --example synthetic_data

use binheads::data::{generate_synthetic, split_dataset, SyntheticSpec};

fn main() -> binheads::Result<()> {
    let mut spec = SyntheticSpec::eight_class();
    spec.total_samples = 5_000;
    spec.seed = 42;

    let data = generate_synthetic(&spec)?;
    println!(
        "{} samples, {} features, {} in-distribution classes + 1 held-out OOD class",
        data.features.n_samples(),
        data.features.n_features(),
        data.labels.n_classes(),
    );
    println!("\nclass distribution (held-out class becomes OOD):");
    for (name, count) in data
        .labels
        .class_names()
        .iter()
        .zip(data.labels.class_counts())
    {
        println!("  {name:<5} {count:>5}  ({:.1}%)", 100.0 * count as f64 / 5_000.0);
    }
    println!(
        "  {:<5} {:>5}  ({:.1}%)",
        "OOD",
        data.labels.ood_count(),
        100.0 * data.labels.ood_count() as f64 / 5_000.0
    );

    // Groups model lesion ids: several samples per group, and a group never
    // straddles splits. OOD groups go only to validation and test.
    let bundle = split_dataset(&data.features, &data.labels, &data.groups, 0.8, 7)?;
    println!("\ngroup-aware 80/10/10 split:");
    for (name, split) in [
        ("train", &bundle.train),
        ("val", &bundle.val),
        ("test", &bundle.test),
    ] {
        let groups: std::collections::BTreeSet<usize> = split.groups.iter().copied().collect();
        println!(
            "  {name:<5} {:>5} samples in {:>3} groups, {:>3} of them OOD",
            split.labels.len(),
            groups.len(),
            split.labels.ood_count(),
        );
    }
    assert_eq!(bundle.train.labels.ood_count(), 0);
    println!("\ntrain split holds no OOD sample, as required for training");
    Ok(())
}
