//! A small from-scratch multilayer perceptron: a shared ReLU trunk feeding
//! either C independent sigmoid heads (one-vs-rest) or a single softmax
//! head (the closed-set competitor).
//!
//! Training is plain SGD with mean-of-batch gradients, optional weighted
//! sampling that draws classes uniformly regardless of their size, optional
//! Gaussian feature-noise augmentation, and learning-rate decay on
//! validation-loss plateaus. Everything is deterministic for a fixed seed,
//! including bit-identical loss histories across runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::types::{FeatureMatrix, Label, LabelVector, ScoreKind, ScoreMatrix};

/// Output layer flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// One independent sigmoid unit per class; scores are per-class
    /// probabilities that need not sum to 1.
    BinaryHeads,
    /// A single C-way softmax head; the network emits raw logits.
    Softmax,
}

/// Network shape: input width, ReLU trunk widths, and the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub n_classes: usize,
    pub head_kind: HeadKind,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_classes == 0 {
            return Err(Error::invalid("input_dim and n_classes must be at least 1"));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("hidden layer widths must be at least 1"));
        }
        Ok(())
    }

    /// Layer widths from input to head output: `[input, hidden..., C]`.
    fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.n_classes);
        dims
    }
}

/// One affine layer: `out_dim x in_dim` row-major weights plus a bias per
/// output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, input: &[f64], output: &mut Vec<f64>) {
        output.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            output.push(acc);
        }
    }
}

/// All parameters of one network: trunk layers followed by the head layer,
/// in forward order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: MlpConfig,
    layers: Vec<Linear>,
}

const PARAMS_MAGIC: &[u8; 8] = b"BHMLP001";

impl ModelParams {
    /// All-zero parameters (sigmoid heads then output exactly 0.5).
    pub fn zeros(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.dims();
        let layers = dims
            .windows(2)
            .map(|pair| Linear::zeros(pair[0], pair[1]))
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    /// Seeded initialization: weights uniform in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(config: &MlpConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(config, &mut rng)
    }

    fn init_with(config: &MlpConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        for layer in &mut params.layers {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    /// All parameters as one flat vector (layer order, weights then bias).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    /// Rebuild parameters from a flat vector laid out like [`Self::to_flat`].
    pub fn from_flat(config: &MlpConfig, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut offset = 0;
        for layer in &mut params.layers {
            let nw = layer.weights.len();
            let nb = layer.bias.len();
            if offset + nw + nb > flat.len() {
                return Err(Error::invalid("flat parameter vector too short"));
            }
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            layer.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        if offset != flat.len() {
            return Err(Error::invalid("flat parameter vector too long"));
        }
        Ok(params)
    }

    /// One SGD step: `params -= lr * grads`.
    pub fn step(&mut self, lr: f64, grads: &[Linear]) {
        for (layer, grad) in self.layers.iter_mut().zip(grads) {
            for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * g;
            }
        }
    }

    /// Serialize to a flat binary file: magic, layer widths, head kind,
    /// then per layer the row-major weights and biases as little-endian
    /// 64-bit floats.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(PARAMS_MAGIC);
        bytes.extend_from_slice(&(self.config.input_dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.config.hidden_dims.len() as u32).to_le_bytes());
        for &d in &self.config.hidden_dims {
            bytes.extend_from_slice(&(d as u32).to_le_bytes());
        }
        bytes.extend_from_slice(&(self.config.n_classes as u32).to_le_bytes());
        bytes.push(match self.config.head_kind {
            HeadKind::BinaryHeads => 0,
            HeadKind::Softmax => 1,
        });
        for v in self.to_flat() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        atomic_write(path, &bytes)?;
        Ok(())
    }

    /// Load parameters written by [`Self::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut cursor = Cursor::new(&bytes);
        let magic = cursor.take(8)?;
        if magic != PARAMS_MAGIC {
            return Err(Error::format(format!(
                "{}: not a model parameter file (bad magic)",
                path.display()
            )));
        }
        let input_dim = cursor.u32()? as usize;
        let n_hidden = cursor.u32()? as usize;
        if n_hidden > 64 {
            return Err(Error::format("implausible hidden layer count"));
        }
        let mut hidden_dims = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden_dims.push(cursor.u32()? as usize);
        }
        let n_classes = cursor.u32()? as usize;
        let head_kind = match cursor.take(1)?[0] {
            0 => HeadKind::BinaryHeads,
            1 => HeadKind::Softmax,
            k => return Err(Error::format(format!("unknown head kind tag {k}"))),
        };
        let config = MlpConfig {
            input_dim,
            hidden_dims,
            n_classes,
            head_kind,
        };
        config
            .validate()
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let n_params: usize = config
            .dims()
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum();
        let mut flat = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let v = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format("non-finite parameter value"));
            }
            flat.push(v);
        }
        if !cursor.at_end() {
            return Err(Error::format("trailing bytes after parameters"));
        }
        Self::from_flat(&config, &flat).map_err(|e| Error::format(e.to_string()))
    }
}

/// Minimal byte reader for the parameter file format.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("unexpected end of parameter file"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Numerically stable logistic function.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward state kept for backpropagation: per trunk layer the
/// pre-activation and post-ReLU activation, plus the head affine output.
struct ForwardPass {
    trunk_pre: Vec<Vec<f64>>,
    trunk_act: Vec<Vec<f64>>,
    head_z: Vec<f64>,
}

fn forward_full(params: &ModelParams, features: &[f64]) -> Result<ForwardPass> {
    if features.len() != params.config.input_dim {
        return Err(Error::invalid(format!(
            "feature length {} vs input_dim {}",
            features.len(),
            params.config.input_dim
        )));
    }
    let n_trunk = params.layers.len() - 1;
    let mut trunk_pre = Vec::with_capacity(n_trunk);
    let mut trunk_act = Vec::with_capacity(n_trunk);
    let mut current: Vec<f64> = features.to_vec();
    for layer in &params.layers[..n_trunk] {
        let mut pre = Vec::new();
        layer.apply(&current, &mut pre);
        let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        current = act.clone();
        trunk_pre.push(pre);
        trunk_act.push(act);
    }
    let mut head_z = Vec::new();
    params.layers[n_trunk].apply(&current, &mut head_z);
    Ok(ForwardPass {
        trunk_pre,
        trunk_act,
        head_z,
    })
}

/// Run one sample through the network. Returns the post-ReLU trunk
/// activations (one vector per hidden layer) and the head outputs: C
/// sigmoid probabilities for [`HeadKind::BinaryHeads`], C raw logits for
/// [`HeadKind::Softmax`].
pub fn forward(params: &ModelParams, features: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let pass = forward_full(params, features)?;
    let outputs = match params.config.head_kind {
        HeadKind::BinaryHeads => pass.head_z.iter().map(|&z| sigmoid(z)).collect(),
        HeadKind::Softmax => pass.head_z,
    };
    Ok((pass.trunk_act, outputs))
}

const PROB_EPS: f64 = 1e-12;

/// Sum of per-head binary cross-entropies against the one-hot target: head
/// `true_class` should say 1, every other head 0. Probabilities are
/// clamped at `1e-12` from both ends before the logs.
pub fn bh_loss(head_probs: &[f64], true_class: usize) -> Result<f64> {
    if true_class >= head_probs.len() {
        return Err(Error::invalid(format!(
            "class {true_class} out of range for {} heads",
            head_probs.len()
        )));
    }
    let mut loss = 0.0;
    for (i, &p) in head_probs.iter().enumerate() {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        if i == true_class {
            loss -= p.ln();
        } else {
            loss -= (1.0 - p).ln();
        }
    }
    Ok(loss)
}

/// Cross-entropy of a softmax over the logits against `true_class`,
/// computed via logsumexp with max-subtraction.
pub fn softmax_loss(logits: &[f64], true_class: usize) -> Result<f64> {
    if true_class >= logits.len() {
        return Err(Error::invalid(format!(
            "class {true_class} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln() - logits[true_class])
}

fn class_indices(labels: &LabelVector) -> Result<Vec<usize>> {
    labels
        .labels()
        .iter()
        .map(|&l| match l {
            Label::Class(c) => Ok(c),
            Label::Ood => Err(Error::invalid(
                "training data must not contain OOD-labeled samples",
            )),
        })
        .collect()
}

fn check_batch(
    params: &ModelParams,
    features: &FeatureMatrix,
    n_labels: usize,
) -> Result<()> {
    if features.n_samples() == 0 {
        return Err(Error::invalid("batch must be non-empty"));
    }
    if features.n_samples() != n_labels {
        return Err(Error::invalid(format!(
            "{} feature rows vs {} labels",
            features.n_samples(),
            n_labels
        )));
    }
    if features.n_features() != params.config.input_dim {
        return Err(Error::invalid(format!(
            "feature dim {} vs input_dim {}",
            features.n_features(),
            params.config.input_dim
        )));
    }
    Ok(())
}

/// Per-sample loss of the configured head on already-computed head affine
/// outputs.
fn head_loss(config: &MlpConfig, head_z: &[f64], true_class: usize) -> Result<f64> {
    match config.head_kind {
        HeadKind::BinaryHeads => {
            let probs: Vec<f64> = head_z.iter().map(|&z| sigmoid(z)).collect();
            bh_loss(&probs, true_class)
        }
        HeadKind::Softmax => softmax_loss(head_z, true_class),
    }
}

/// Mean loss of the batch under the model's head.
pub fn batch_loss(
    params: &ModelParams,
    features: &FeatureMatrix,
    labels: &LabelVector,
) -> Result<f64> {
    let classes = class_indices(labels)?;
    check_batch(params, features, classes.len())?;
    let mut total = 0.0;
    for (row, &true_class) in features.rows().zip(&classes) {
        let pass = forward_full(params, row)?;
        total += head_loss(&params.config, &pass.head_z, true_class)?;
    }
    Ok(total / classes.len() as f64)
}

fn gradients_by_class(
    params: &ModelParams,
    features: &FeatureMatrix,
    classes: &[usize],
) -> Result<Vec<Linear>> {
    check_batch(params, features, classes.len())?;
    let mut grads: Vec<Linear> = params
        .layers
        .iter()
        .map(|l| Linear::zeros(l.in_dim, l.out_dim))
        .collect();

    for (row, &true_class) in features.rows().zip(classes) {
        if true_class >= params.config.n_classes {
            return Err(Error::invalid(format!(
                "class {true_class} out of range for {} classes",
                params.config.n_classes
            )));
        }
        let pass = forward_full(params, row)?;

        // Head gradient. Both heads reduce to dL/dz = p - y: the sigmoid
        // heads under summed binary cross-entropy, and the softmax head
        // under cross-entropy.
        let mut dz: Vec<f64> = match params.config.head_kind {
            HeadKind::BinaryHeads => pass.head_z.iter().map(|&z| sigmoid(z)).collect(),
            HeadKind::Softmax => {
                let max = pass.head_z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let exps: Vec<f64> = pass.head_z.iter().map(|&z| (z - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / sum).collect()
            }
        };
        dz[true_class] -= 1.0;

        // Walk the layers backward, accumulating into the shared grads.
        for l in (0..params.layers.len()).rev() {
            let input: &[f64] = if l == 0 {
                row
            } else {
                &pass.trunk_act[l - 1]
            };
            let layer = &params.layers[l];
            let grad = &mut grads[l];
            for o in 0..layer.out_dim {
                let g = dz[o];
                grad.bias[o] += g;
                let w_row = &mut grad.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, x) in w_row.iter_mut().zip(input) {
                    *w += g * x;
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through the affine layer and the ReLU of layer l-1.
            let mut da = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let g = dz[o];
                let w_row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (a, w) in da.iter_mut().zip(w_row) {
                    *a += g * w;
                }
            }
            let pre = &pass.trunk_pre[l - 1];
            dz = da
                .into_iter()
                .zip(pre)
                .map(|(a, &z)| if z > 0.0 { a } else { 0.0 })
                .collect();
        }
    }

    let scale = 1.0 / classes.len() as f64;
    for grad in &mut grads {
        for w in &mut grad.weights {
            *w *= scale;
        }
        for b in &mut grad.bias {
            *b *= scale;
        }
    }
    Ok(grads)
}

/// Exact analytic gradient of the mean batch loss, shaped like the
/// parameter layers. Head gradients all flow into the shared trunk.
pub fn gradients(
    params: &ModelParams,
    features: &FeatureMatrix,
    labels: &LabelVector,
) -> Result<Vec<Linear>> {
    let classes = class_indices(labels)?;
    gradients_by_class(params, features, &classes)
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// SGD step size; may be 0 for a no-op run.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a >= 1e-6 validation-loss improvement before the
    /// learning rate is decayed.
    pub plateau_patience: usize,
    /// Multiplier applied on plateau, in (0, 1); the rate never drops
    /// below 1e-6.
    pub lr_decay_factor: f64,
    /// Draw training batches so every class is equally likely regardless
    /// of its sample count (each sample weighted by 1 / its class count).
    pub weighted_sampling: bool,
    /// Standard deviation of isotropic Gaussian noise added to features of
    /// sampled batches; 0 disables augmentation.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 32,
            max_epochs: 100,
            plateau_patience: 5,
            lr_decay_factor: 0.5,
            weighted_sampling: true,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::invalid("plateau_patience must be at least 1"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::invalid("lr_decay_factor must lie in (0, 1)"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One epoch of the training history. Losses and balanced accuracies are
/// full-pass evaluations on the clean (un-augmented) train and validation
/// sets after the epoch's updates, so they are independent of batch order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_balanced_accuracy: f64,
    pub val_balanced_accuracy: f64,
    pub learning_rate: f64,
}

/// Draws sample indices so that each class is picked uniformly: first a
/// class, then uniformly one of its members. Equivalent to sampling with
/// per-sample weight 1 / class_count.
struct WeightedSampler {
    by_class: Vec<Vec<usize>>,
}

impl WeightedSampler {
    fn new(classes: &[usize], n_classes: usize) -> Result<Self> {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &c) in classes.iter().enumerate() {
            by_class[c].push(i);
        }
        by_class.retain(|members| !members.is_empty());
        if by_class.is_empty() {
            return Err(Error::invalid("cannot sample from an empty dataset"));
        }
        Ok(Self { by_class })
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let class = rng.gen_range(0..self.by_class.len());
        let members = &self.by_class[class];
        members[rng.gen_range(0..members.len())]
    }
}

/// Mean of per-class argmax recalls over the classes present in `classes`.
fn argmax_balanced_accuracy(
    params: &ModelParams,
    features: &FeatureMatrix,
    classes: &[usize],
) -> Result<f64> {
    let c = params.config.n_classes;
    let mut correct = vec![0u64; c];
    let mut totals = vec![0u64; c];
    for (row, &true_class) in features.rows().zip(classes) {
        let pass = forward_full(params, row)?;
        let mut best = 0;
        for (i, &z) in pass.head_z.iter().enumerate().skip(1) {
            if z > pass.head_z[best] {
                best = i;
            }
        }
        totals[true_class] += 1;
        if best == true_class {
            correct[true_class] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for i in 0..c {
        if totals[i] > 0 {
            sum += correct[i] as f64 / totals[i] as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(Error::invalid("no labeled samples to evaluate"));
    }
    Ok(sum / present as f64)
}

const LR_FLOOR: f64 = 1e-6;
const PLATEAU_MIN_IMPROVEMENT: f64 = 1e-6;

/// Train a network with SGD, returning the parameters with the best
/// validation loss and the per-epoch history.
///
/// Deterministic for a fixed `cfg.seed`: initialization, batch sampling
/// and noise all come from one seeded stream.
pub fn train(
    train_features: &FeatureMatrix,
    train_labels: &LabelVector,
    val_features: &FeatureMatrix,
    val_labels: &LabelVector,
    mlp: &MlpConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    mlp.validate()?;
    cfg.validate()?;
    if train_labels.n_classes() != mlp.n_classes || val_labels.n_classes() != mlp.n_classes {
        return Err(Error::invalid("label class count must match the model"));
    }
    let train_classes = class_indices(train_labels)?;
    let val_classes = class_indices(val_labels)?;
    if val_features.n_samples() != val_classes.len() || val_features.n_samples() == 0 {
        return Err(Error::invalid("validation set must be non-empty and aligned"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init_with(mlp, &mut rng)?;
    check_batch(&params, train_features, train_classes.len())?;
    check_batch(&params, val_features, val_classes.len())?;

    let sampler = WeightedSampler::new(&train_classes, mlp.n_classes)?;
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let n = train_classes.len();
    let mut lr = cfg.learning_rate;
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut epochs_since_improvement = 0usize;
    let mut history = Vec::with_capacity(cfg.max_epochs);

    for epoch in 0..cfg.max_epochs {
        // Choose this epoch's sample order.
        let indices: Vec<usize> = if cfg.weighted_sampling {
            (0..n).map(|_| sampler.draw(&mut rng)).collect()
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            order
        };

        for batch in indices.chunks(cfg.batch_size) {
            // Materialize the batch, with optional feature noise.
            let d = train_features.n_features();
            let mut values = Vec::with_capacity(batch.len() * d);
            let mut classes = Vec::with_capacity(batch.len());
            for &i in batch {
                values.extend_from_slice(train_features.row(i));
                classes.push(train_classes[i]);
            }
            if let Some(normal) = &noise {
                for v in &mut values {
                    *v += normal.sample(&mut rng);
                }
            }
            let batch_features = FeatureMatrix::new(d, values)?;
            let grads = gradients_by_class(&params, &batch_features, &classes)?;
            params.step(lr, &grads);
        }

        let train_loss = batch_loss(&params, train_features, train_labels)?;
        let val_loss = batch_loss(&params, val_features, val_labels)?;
        let train_ba = argmax_balanced_accuracy(&params, train_features, &train_classes)?;
        let val_ba = argmax_balanced_accuracy(&params, val_features, &val_classes)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            train_balanced_accuracy: train_ba,
            val_balanced_accuracy: val_ba,
            learning_rate: lr,
        });

        if val_loss < best_val {
            best_params = params.clone();
        }
        if val_loss < best_val - PLATEAU_MIN_IMPROVEMENT {
            best_val = val_loss.min(best_val);
            epochs_since_improvement = 0;
        } else {
            best_val = best_val.min(val_loss);
            epochs_since_improvement += 1;
            if epochs_since_improvement >= cfg.plateau_patience {
                lr = (lr * cfg.lr_decay_factor).max(LR_FLOOR);
                epochs_since_improvement = 0;
            }
        }
    }

    Ok((best_params, history))
}

/// Forward every row; kind is `Probability` for sigmoid heads, `Logit` for
/// the softmax head.
pub fn score_dataset(params: &ModelParams, features: &FeatureMatrix) -> Result<ScoreMatrix> {
    if features.n_features() != params.config.input_dim {
        return Err(Error::invalid(format!(
            "feature dim {} vs input_dim {}",
            features.n_features(),
            params.config.input_dim
        )));
    }
    let c = params.config.n_classes;
    let mut values = Vec::with_capacity(features.n_samples() * c);
    for row in features.rows() {
        let (_, outputs) = forward(params, row)?;
        values.extend_from_slice(&outputs);
    }
    let kind = match params.config.head_kind {
        HeadKind::BinaryHeads => ScoreKind::Probability,
        HeadKind::Softmax => ScoreKind::Logit,
    };
    ScoreMatrix::new(kind, c, values)
}
