//! Synthetic imbalanced datasets, group-aware splitting, and the CSV
//! interchange formats.
//!
//! Generation mimics a dermatology-style setup: heavily imbalanced classes,
//! one designated class held out as OOD (absent from training), and samples
//! organized in groups (stand-ins for lesion ids, several images per
//! lesion) that must never straddle splits.
//!
//! Two file formats are emitted and ingested, both UTF-8 with LF endings
//! and 17-significant-digit reals so values round-trip bit-exactly:
//!
//! - score CSV: a `# kind: Probability|Logit` line, then
//!   `id,label,<class names...>`, then one row per sample;
//! - feature CSV: a `# classes: <names...>` line, then
//!   `id,group,label,f0..f{d-1}`. The class list pins the label-to-index
//!   mapping, which the bare header could not.
//!
//! The literal label `OOD` marks held-out samples in both formats.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::types::{FeatureMatrix, Label, LabelVector, ScoreKind, ScoreMatrix};

/// Recipe for a synthetic clustered dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Number of generated classes including the held-out OOD class.
    pub n_classes_total: usize,
    /// One name per generated class, in index order.
    pub class_names: Vec<String>,
    /// Positive proportions summing to 1 (within 1e-9).
    pub class_proportions: Vec<f64>,
    pub total_samples: usize,
    pub feature_dim: usize,
    /// Distance of every class mean from the origin; 0 makes all classes
    /// identically distributed.
    pub cluster_separation: f64,
    /// Isotropic standard deviation around each class mean.
    pub cluster_scale: f64,
    /// Class whose samples are labeled OOD and excluded from training.
    pub ood_class_index: usize,
    /// Groups (lesion-id analog) per class; samples are assigned uniformly.
    pub groups_per_class: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Eight-class dermatology-style preset: proportions patterned on the
    /// class shares of a real skin-lesion corpus, with actinic keratosis
    /// (AK) as the held-out OOD class.
    pub fn eight_class() -> Self {
        Self {
            n_classes_total: 8,
            class_names: ["NV", "MEL", "BCC", "BKL", "SCC", "DF", "VASC", "AK"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            class_proportions: vec![0.50, 0.15, 0.09, 0.08, 0.02, 0.01, 0.01, 0.14],
            total_samples: 20_000,
            feature_dim: 16,
            // Tuned so a plain argmax classifier's mean in-distribution
            // recall lands in the 0.80–0.95 band: hard enough that
            // per-class thresholds have headroom, easy enough to train.
            cluster_separation: 4.0,
            cluster_scale: 1.0,
            ood_class_index: 7,
            groups_per_class: 30,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes_total < 2 {
            return Err(Error::invalid("need at least 2 classes (1 in-dist + OOD)"));
        }
        if self.class_names.len() != self.n_classes_total {
            return Err(Error::invalid(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.n_classes_total
            )));
        }
        if self.class_proportions.len() != self.n_classes_total {
            return Err(Error::invalid(format!(
                "{} proportions for {} classes",
                self.class_proportions.len(),
                self.n_classes_total
            )));
        }
        if self.class_proportions.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid("class proportions must be positive"));
        }
        let sum: f64 = self.class_proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "class proportions sum to {sum}, expected 1"
            )));
        }
        if self.ood_class_index >= self.n_classes_total {
            return Err(Error::invalid("ood_class_index out of range"));
        }
        if self.total_samples == 0 || self.feature_dim == 0 || self.groups_per_class == 0 {
            return Err(Error::invalid(
                "total_samples, feature_dim and groups_per_class must be at least 1",
            ));
        }
        if !(self.cluster_separation >= 0.0) || !self.cluster_separation.is_finite() {
            return Err(Error::invalid("cluster_separation must be finite and >= 0"));
        }
        if !(self.cluster_scale > 0.0) || !self.cluster_scale.is_finite() {
            return Err(Error::invalid("cluster_scale must be positive and finite"));
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`]: features, labels with the held-out
/// class already mapped to the OOD sentinel, and per-sample group ids.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub groups: Vec<usize>,
}

/// Deterministic largest-remainder apportionment of `total` into
/// `proportions.len()` counts; remainder ties go to the lower index.
fn largest_remainder_counts(proportions: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &idx in order.iter().take(total - assigned) {
        counts[idx] += 1;
    }
    counts
}

/// Generate isotropic Gaussian clusters per the spec. Class `k`'s mean
/// sits on a seeded random unit direction at distance `cluster_separation`
/// from the origin. Each sample lands uniformly in one of its class's
/// `groups_per_class` groups; group ids are globally unique
/// (`class * groups_per_class + local`). Samples of the OOD class come out
/// labeled with the OOD sentinel; the in-distribution classes keep their
/// relative order with the OOD class's index removed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let counts = largest_remainder_counts(&spec.class_proportions, spec.total_samples);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "class {empty} ('{}') rounds to zero samples; increase total_samples",
            spec.class_names[empty]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;

    // One mean per class: a random direction scaled to the separation.
    let mut means = Vec::with_capacity(spec.n_classes_total);
    for _ in 0..spec.n_classes_total {
        let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Astronomically unlikely; fall back to the first axis.
            dir = vec![0.0; d];
            dir[0] = 1.0;
        } else {
            for v in &mut dir {
                *v /= norm;
            }
        }
        means.push(
            dir.into_iter()
                .map(|v| v * spec.cluster_separation)
                .collect::<Vec<f64>>(),
        );
    }

    // In-distribution class names and the index remap around the held-out
    // class: generated indices above it shift down by one.
    let in_dist_names: Vec<String> = spec
        .class_names
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != spec.ood_class_index)
        .map(|(_, n)| n.clone())
        .collect();
    let remap = |k: usize| -> Label {
        if k == spec.ood_class_index {
            Label::Ood
        } else if k < spec.ood_class_index {
            Label::Class(k)
        } else {
            Label::Class(k - 1)
        }
    };

    let noise = Normal::new(0.0, spec.cluster_scale).expect("validated scale");
    let mut values = Vec::with_capacity(spec.total_samples * d);
    let mut labels = Vec::with_capacity(spec.total_samples);
    let mut groups = Vec::with_capacity(spec.total_samples);
    for (k, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for &m in &means[k] {
                values.push(m + noise.sample(&mut rng));
            }
            labels.push(remap(k));
            groups.push(k * spec.groups_per_class + rng.gen_range(0..spec.groups_per_class));
        }
    }

    Ok(GeneratedData {
        features: FeatureMatrix::new(d, values)?,
        labels: LabelVector::new(labels, in_dist_names)?,
        groups,
    })
}

/// One split of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub groups: Vec<usize>,
}

/// Train/validation/test partition with group integrity: no group id
/// appears in more than one split and the train split holds no OOD sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: SplitData,
    pub val: SplitData,
    pub test: SplitData,
}

impl DatasetBundle {
    pub fn class_names(&self) -> &[String] {
        self.train.labels.class_names()
    }
}

/// Split by group id: per in-distribution class, about `train_frac` of its
/// groups go to train (always leaving at least one group each for
/// validation and test); OOD groups are split half/half between validation
/// and test, the extra group of an odd count going to validation.
/// Deterministic per seed.
pub fn split_dataset(
    features: &FeatureMatrix,
    labels: &LabelVector,
    groups: &[usize],
    train_frac: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    let n = labels.len();
    if features.n_samples() != n || groups.len() != n {
        return Err(Error::invalid(format!(
            "{} feature rows, {} labels, {} group ids",
            features.n_samples(),
            n,
            groups.len()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }

    // Each group must carry exactly one label class.
    let mut group_class: BTreeMap<usize, Label> = BTreeMap::new();
    for (&g, &label) in groups.iter().zip(labels.labels()) {
        match group_class.get(&g) {
            None => {
                group_class.insert(g, label);
            }
            Some(&prev) if prev == label => {}
            Some(_) => {
                return Err(Error::invalid(format!(
                    "group {g} contains samples of different classes"
                )));
            }
        }
    }

    // Group ids per in-dist class and for OOD, in sorted order for
    // seed-stable shuffling.
    let c = labels.n_classes();
    let mut class_groups: Vec<Vec<usize>> = vec![Vec::new(); c];
    let mut ood_groups: Vec<usize> = Vec::new();
    for (&g, &label) in &group_class {
        match label {
            Label::Class(k) => class_groups[k].push(g),
            Label::Ood => ood_groups.push(g),
        }
    }

    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_set: BTreeSet<usize> = BTreeSet::new();
    let mut val_set: BTreeSet<usize> = BTreeSet::new();
    let mut test_set: BTreeSet<usize> = BTreeSet::new();

    for (k, group_list) in class_groups.iter_mut().enumerate() {
        let n_groups = group_list.len();
        if n_groups < 3 {
            return Err(Error::invalid(format!(
                "class {k} ('{}') has {n_groups} groups; need at least 3 \
                 so every split gets one",
                labels.class_names()[k]
            )));
        }
        group_list.shuffle(&mut rng);
        let n_train = ((train_frac * n_groups as f64).round() as usize).clamp(1, n_groups - 2);
        let rest = n_groups - n_train;
        let n_val = rest.div_ceil(2);
        for (i, &g) in group_list.iter().enumerate() {
            if i < n_train {
                train_set.insert(g);
            } else if i < n_train + n_val {
                val_set.insert(g);
            } else {
                test_set.insert(g);
            }
        }
    }
    ood_groups.shuffle(&mut rng);
    let ood_val = ood_groups.len().div_ceil(2);
    for (i, &g) in ood_groups.iter().enumerate() {
        if i < ood_val {
            val_set.insert(g);
        } else {
            test_set.insert(g);
        }
    }

    let collect = |keep: &BTreeSet<usize>| -> SplitData {
        let idx: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| keep.contains(g))
            .map(|(i, _)| i)
            .collect();
        SplitData {
            features: features.select_rows(&idx),
            labels: labels.filtered(|i, _| keep.contains(&groups[i])),
            groups: idx.iter().map(|&i| groups[i]).collect(),
        }
    };

    Ok(DatasetBundle {
        train: collect(&train_set),
        val: collect(&val_set),
        test: collect(&test_set),
    })
}

/// Row ids `s0, s1, ...` used when the caller has no natural identifiers.
pub fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// 17-significant-digit decimal, enough for `f64` to round-trip exactly.
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_csv_token(token: &str, what: &str) -> Result<()> {
    if token.is_empty() {
        return Err(Error::invalid(format!("{what} must not be empty")));
    }
    if token.contains(',') || token.contains('\n') || token.contains('\r') {
        return Err(Error::invalid(format!(
            "{what} '{token}' contains a comma or line break"
        )));
    }
    Ok(())
}

/// Write a score matrix with labels to CSV. `ids` supplies one identifier
/// per row; see [`default_ids`].
pub fn save_scores_csv(
    path: &Path,
    scores: &ScoreMatrix,
    labels: &LabelVector,
    ids: &[String],
) -> Result<()> {
    if scores.n_samples() != labels.len() || ids.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} score rows, {} labels, {} ids",
            scores.n_samples(),
            labels.len(),
            ids.len()
        )));
    }
    if scores.n_classes() != labels.n_classes() {
        return Err(Error::invalid("score/label class count mismatch"));
    }
    let mut out = String::new();
    let kind = match scores.kind() {
        ScoreKind::Probability => "Probability",
        ScoreKind::Logit => "Logit",
    };
    out.push_str(&format!("# kind: {kind}\n"));
    out.push_str("id,label");
    for name in labels.class_names() {
        check_csv_token(name, "class name")?;
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for ((row, &label), id) in scores.rows().zip(labels.labels()).zip(ids) {
        check_csv_token(id, "row id")?;
        out.push_str(id);
        out.push(',');
        out.push_str(labels.name_of(label));
        for &v in row {
            out.push(',');
            out.push_str(&fmt_real(v));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

/// Lines of a CSV file with 1-based line numbers, ignoring a trailing
/// empty line and tolerating CRLF.
fn csv_lines(raw: &str) -> Vec<(usize, &str)> {
    raw.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .collect()
}

fn parse_real(line_no: usize, token: &str) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line_no, format!("non-numeric value '{token}'")))
}

/// Read a score CSV written by [`save_scores_csv`] (or by an external
/// scorer following the same format).
pub fn load_scores_csv(path: &Path) -> Result<(ScoreMatrix, LabelVector)> {
    let raw = std::fs::read_to_string(path)?;
    let lines = csv_lines(&raw);
    let mut iter = lines.iter();

    let (line_no, first) = iter
        .next()
        .ok_or_else(|| Error::parse(1, "empty file; expected '# kind: ...'"))?;
    let kind = match first.strip_prefix("# kind: ").map(str::trim) {
        Some("Probability") => ScoreKind::Probability,
        Some("Logit") => ScoreKind::Logit,
        Some(other) => {
            return Err(Error::parse(
                *line_no,
                format!("unknown score kind '{other}'"),
            ))
        }
        None => {
            return Err(Error::parse(
                *line_no,
                "expected a '# kind: Probability|Logit' line",
            ))
        }
    };

    let (line_no, header) = iter
        .next()
        .ok_or_else(|| Error::parse(2, "missing header row"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::parse(
            *line_no,
            format!("expected header 'id,label,<classes...>', got '{header}'"),
        ));
    }
    let class_names: Vec<String> = cols[2..].iter().map(|s| s.trim().to_string()).collect();
    let n_classes = class_names.len();
    // Validate names through a throwaway label vector.
    let template = LabelVector::new(vec![], class_names.clone())
        .map_err(|e| Error::parse(*line_no, e.to_string()))?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in iter {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + n_classes {
            return Err(Error::parse(
                *line_no,
                format!("expected {} fields, got {}", 2 + n_classes, fields.len()),
            ));
        }
        let label = template.parse_label(fields[1].trim()).ok_or_else(|| {
            Error::parse(*line_no, format!("unknown label '{}'", fields[1]))
        })?;
        for token in &fields[2..] {
            values.push(parse_real(*line_no, token)?);
        }
        labels.push(label);
    }
    let scores = ScoreMatrix::new(kind, n_classes, values)?;
    let labels = LabelVector::new(labels, class_names)?;
    Ok((scores, labels))
}

/// Write features with group ids and labels to CSV. The leading
/// `# classes:` line pins the label-name-to-index mapping.
pub fn save_features_csv(
    path: &Path,
    features: &FeatureMatrix,
    labels: &LabelVector,
    groups: &[usize],
    ids: &[String],
) -> Result<()> {
    let n = labels.len();
    if features.n_samples() != n || groups.len() != n || ids.len() != n {
        return Err(Error::invalid(format!(
            "{} feature rows, {} labels, {} groups, {} ids",
            features.n_samples(),
            n,
            groups.len(),
            ids.len()
        )));
    }
    let mut out = String::new();
    out.push_str("# classes: ");
    for (i, name) in labels.class_names().iter().enumerate() {
        check_csv_token(name, "class name")?;
        if i > 0 {
            out.push(',');
        }
        out.push_str(name);
    }
    out.push('\n');
    out.push_str("id,group,label");
    for j in 0..features.n_features() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (((row, &label), &group), id) in features
        .rows()
        .zip(labels.labels())
        .zip(groups)
        .zip(ids)
    {
        check_csv_token(id, "row id")?;
        out.push_str(&format!("{id},{group},{}", labels.name_of(label)));
        for &v in row {
            out.push(',');
            out.push_str(&fmt_real(v));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

/// Read a feature CSV written by [`save_features_csv`].
pub fn load_features_csv(path: &Path) -> Result<(FeatureMatrix, LabelVector, Vec<usize>)> {
    let raw = std::fs::read_to_string(path)?;
    let lines = csv_lines(&raw);
    let mut iter = lines.iter();

    let (line_no, first) = iter
        .next()
        .ok_or_else(|| Error::parse(1, "empty file; expected '# classes: ...'"))?;
    let names_raw = first.strip_prefix("# classes: ").ok_or_else(|| {
        Error::parse(*line_no, "expected a '# classes: <names...>' line")
    })?;
    let class_names: Vec<String> = names_raw
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let template = LabelVector::new(vec![], class_names.clone())
        .map_err(|e| Error::parse(*line_no, e.to_string()))?;

    let (line_no, header) = iter
        .next()
        .ok_or_else(|| Error::parse(2, "missing header row"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "id" || cols[1] != "group" || cols[2] != "label" {
        return Err(Error::parse(
            *line_no,
            format!("expected header 'id,group,label,f0...', got '{header}'"),
        ));
    }
    let d = cols.len() - 3;
    for (j, col) in cols[3..].iter().enumerate() {
        if *col != format!("f{j}") {
            return Err(Error::parse(
                *line_no,
                format!("expected feature column 'f{j}', got '{col}'"),
            ));
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (line_no, line) in iter {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + d {
            return Err(Error::parse(
                *line_no,
                format!("expected {} fields, got {}", 3 + d, fields.len()),
            ));
        }
        let group: usize = fields[1].trim().parse().map_err(|_| {
            Error::parse(*line_no, format!("bad group id '{}'", fields[1]))
        })?;
        let label = template.parse_label(fields[2].trim()).ok_or_else(|| {
            Error::parse(*line_no, format!("unknown label '{}'", fields[2]))
        })?;
        for token in &fields[3..] {
            values.push(parse_real(*line_no, token)?);
        }
        groups.push(group);
        labels.push(label);
    }
    let features = FeatureMatrix::new(d, values)?;
    let labels = LabelVector::new(labels, class_names)?;
    Ok((features, labels, groups))
}
