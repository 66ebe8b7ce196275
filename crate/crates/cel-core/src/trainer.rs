//! Minimal self-contained classifier trainer: dense ReLU network, softmax
//! cross-entropy, analytic backpropagation, SGD with momentum and weight
//! decay, a step learning-rate schedule, and warm-started training stages.
//!
//! Everything here is deterministic: identical seed, config, data and pool
//! produce bit-identical parameters and metrics.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{fisher_yates, LabeledDataset};
use crate::error::{CelError, Result};

/// Fully-connected feedforward network. Hidden layers use ReLU, the output
/// layer is linear (normalized at loss time).
///
/// Weights of layer `l` are stored row-major (`out * in`), biases per layer.
/// The flat parameter order is layer 0 weights, layer 0 biases, layer 1
/// weights, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl DenseModel {
    /// Seeded random initialization: weights uniform in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn random(layer_dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let layer: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(layer);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// All-zero parameters, mostly useful as a test fixture.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_dims.windows(2).map(|w| vec![0.0; w[1]]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds a model from explicit per-layer weights and biases.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(CelError::DimensionMismatch {
                what: "layer count",
                expected: layers,
                got: weights.len(),
            });
        }
        for (l, w) in layer_dims.windows(2).enumerate() {
            if weights[l].len() != w[0] * w[1] {
                return Err(CelError::DimensionMismatch {
                    what: "layer weights",
                    expected: w[0] * w[1],
                    got: weights[l].len(),
                });
            }
            if biases[l].len() != w[1] {
                return Err(CelError::DimensionMismatch {
                    what: "layer biases",
                    expected: w[1],
                    got: biases[l].len(),
                });
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Flattens parameters in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for l in 0..self.weights.len() {
            flat.extend_from_slice(&self.weights[l]);
            flat.extend_from_slice(&self.biases[l]);
        }
        flat
    }

    /// Rebuilds a model from a flat parameter vector.
    pub fn from_flat(layer_dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        if flat.len() != model.num_params() {
            return Err(CelError::DimensionMismatch {
                what: "flat parameters",
                expected: model.num_params(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for l in 0..model.weights.len() {
            let wlen = model.weights[l].len();
            model.weights[l].copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = model.biases[l].len();
            model.biases[l].copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        Ok(model)
    }

    fn get_param(&self, index: usize) -> f64 {
        let (l, in_layer, wlen) = self.locate(index);
        if in_layer < wlen {
            self.weights[l][in_layer]
        } else {
            self.biases[l][in_layer - wlen]
        }
    }

    fn set_param(&mut self, index: usize, value: f64) {
        let (l, in_layer, wlen) = self.locate(index);
        if in_layer < wlen {
            self.weights[l][in_layer] = value;
        } else {
            self.biases[l][in_layer - wlen] = value;
        }
    }

    fn locate(&self, index: usize) -> (usize, usize, usize) {
        let mut offset = index;
        for l in 0..self.weights.len() {
            let span = self.weights[l].len() + self.biases[l].len();
            if offset < span {
                return (l, offset, self.weights[l].len());
            }
            offset -= span;
        }
        panic!("parameter index {index} out of range");
    }

    /// Deterministic logits for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(features)?.pop().unwrap())
    }

    /// Per-layer activations: input, each hidden layer post-ReLU, then the
    /// linear output logits.
    pub fn forward_trace(&self, features: &[f64]) -> Result<Vec<Vec<f64>>> {
        if features.len() != self.input_dim() {
            return Err(CelError::DimensionMismatch {
                what: "input features",
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        let layers = self.weights.len();
        let mut trace = Vec::with_capacity(layers + 1);
        trace.push(features.to_vec());
        for l in 0..layers {
            let input = trace.last().unwrap();
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                let mut z = self.biases[l][o];
                for (w, x) in row.iter().zip(input) {
                    z += w * x;
                }
                if !z.is_finite() {
                    return Err(CelError::NonFinite {
                        what: "activations",
                    });
                }
                out.push(if l + 1 < layers { z.max(0.0) } else { z });
            }
            trace.push(out);
        }
        Ok(trace)
    }

    /// Penultimate-layer activations plus logits; the embedding a confusion
    /// scorer reads. With a single linear layer the embedding is the input
    /// itself.
    pub fn embed(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut trace = self.forward_trace(features)?;
        let logits = trace.pop().unwrap();
        let embedding = trace.pop().unwrap();
        Ok((embedding, logits))
    }

    /// Dimension of the embedding `embed` returns.
    pub fn embedding_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(CelError::InvalidConfig(format!(
            "layer_dims must list at least [input, output] nonzero sizes, got {layer_dims:?}"
        )));
    }
    Ok(())
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy of one logit vector against a class index.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    assert!(
        label < logits.len(),
        "label {label} out of range for {} logits",
        logits.len()
    );
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Parameter-shaped buffer used for gradients and momentum velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &DenseModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Backpropagation over a batch given by dataset indices. Returns the
/// gradient of the mean batch loss and the mean loss itself.
fn backward(model: &DenseModel, ds: &LabeledDataset, batch: &[usize]) -> Result<(Gradients, f64)> {
    check_batch(ds, batch)?;
    let mut grads = Gradients::zeros_like(model);
    let mut loss_sum = 0.0;
    let layers = model.weights.len();

    for &i in batch {
        let sample = &ds.samples()[i];
        let trace = model.forward_trace(&sample.features)?;
        let logits = trace.last().unwrap();
        loss_sum += cross_entropy(logits, sample.label);

        // dL/dlogits = softmax(logits) - onehot(label)
        let mut delta = softmax(logits);
        delta[sample.label] -= 1.0;

        for l in (0..layers).rev() {
            let input = &trace[l];
            let fan_in = model.layer_dims[l];
            let rows = grads.weights[l].chunks_exact_mut(fan_in);
            for ((row, bias), &d) in rows.zip(&mut grads.biases[l]).zip(&delta) {
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                *bias += d;
            }
            if l > 0 {
                // ReLU mask: post-activation > 0 iff pre-activation > 0.
                let mut next = vec![0.0; fan_in];
                for (row, &d) in model.weights[l].chunks_exact(fan_in).zip(&delta) {
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += w * d;
                    }
                }
                for (n, &a) in next.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
    }

    let scale = 1.0 / batch.len() as f64;
    for v in grads.weights.iter_mut().chain(grads.biases.iter_mut()) {
        for g in v.iter_mut() {
            *g *= scale;
        }
    }
    Ok((grads, loss_sum * scale))
}

/// Gradient of the mean batch loss w.r.t. every parameter.
pub fn gradients(model: &DenseModel, ds: &LabeledDataset, batch: &[usize]) -> Result<Gradients> {
    let (grads, _) = backward(model, ds, batch)?;
    if !grads.is_finite() {
        return Err(CelError::NonFinite { what: "gradients" });
    }
    Ok(grads)
}

fn check_batch(ds: &LabeledDataset, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(CelError::EmptyPool);
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= ds.len()) {
        return Err(CelError::DimensionMismatch {
            what: "batch index",
            expected: ds.len(),
            got: bad,
        });
    }
    Ok(())
}

/// Mean softmax cross-entropy over a batch of dataset indices.
pub fn batch_loss(model: &DenseModel, ds: &LabeledDataset, batch: &[usize]) -> Result<f64> {
    check_batch(ds, batch)?;
    let mut sum = 0.0;
    for &i in batch {
        let sample = &ds.samples()[i];
        sum += cross_entropy(&model.forward(&sample.features)?, sample.label);
    }
    Ok(sum / batch.len() as f64)
}

/// One SGD update with momentum and weight decay:
/// `v <- momentum * v - lr * (g + weight_decay * theta); theta <- theta + v`.
pub fn sgd_step(
    model: &mut DenseModel,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    let params = model.weights.iter_mut().chain(model.biases.iter_mut());
    let gs = grads.weights.iter().chain(grads.biases.iter());
    let vs = velocity
        .weights
        .iter_mut()
        .chain(velocity.biases.iter_mut());
    for ((p, g), v) in params.zip(gs).zip(vs) {
        for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = momentum * *v - lr * (g + weight_decay * *p);
            *p += *v;
        }
    }
}

/// Hyperparameters for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Fractions of the stage's epoch count at which the learning rate drops.
    pub lr_drop_points: Vec<f64>,
    /// Multiplier applied at each drop point.
    pub lr_drop_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            initial_lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 30,
            lr_drop_points: vec![0.5, 0.75],
            lr_drop_factor: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(CelError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(CelError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !self.initial_lr.is_finite() || self.initial_lr < 0.0 {
            return Err(CelError::InvalidConfig(
                "initial_lr must be a finite non-negative real".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CelError::InvalidConfig(
                "momentum must lie in [0, 1)".into(),
            ));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(CelError::InvalidConfig("weight_decay must be >= 0".into()));
        }
        if !self.lr_drop_factor.is_finite() || self.lr_drop_factor <= 0.0 {
            return Err(CelError::InvalidConfig(
                "lr_drop_factor must be a positive real".into(),
            ));
        }
        let mut prev = 0.0;
        for &q in &self.lr_drop_points {
            if !q.is_finite() || q <= prev || q >= 1.0 {
                return Err(CelError::InvalidConfig(
                    "lr_drop_points must be strictly increasing fractions in (0, 1)".into(),
                ));
            }
            prev = q;
        }
        Ok(())
    }
}

/// Learning rate in force at a zero-based epoch index: the initial rate
/// times `lr_drop_factor` for every drop point `q` with `ceil(q * epochs) <=
/// epoch`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    let drops = config
        .lr_drop_points
        .iter()
        .filter(|&&q| (q * config.epochs as f64).ceil() as usize <= epoch)
        .count();
    config.initial_lr * config.lr_drop_factor.powi(drops as i32)
}

const CHECKPOINT_VERSION: u32 = 1;

/// Full training state at a stage boundary: parameters, stage index,
/// cumulative epoch counter and the shuffle RNG, so a later stage continues
/// the exact same stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub parameters: Vec<f64>,
    pub stage: usize,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn to_model(&self) -> Result<DenseModel> {
        DenseModel::from_flat(&self.layer_dims, &self.parameters)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&json)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CelError::CheckpointVersion {
                expected: CHECKPOINT_VERSION,
                got: ckpt.version,
            });
        }
        Ok(ckpt)
    }
}

/// How a training stage starts: fresh seeded initialization (stage 1) or the
/// previous stage's checkpoint, parameters carried over bit-exactly.
#[derive(Debug, Clone)]
pub enum StageInit {
    Fresh { layer_dims: Vec<usize> },
    Warm(Box<Checkpoint>),
}

/// Per-epoch training metrics. Validation fields are present when an
/// evaluation dataset was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub per_class_error: Option<Vec<f64>>,
}

/// Evaluation of a model on a dataset by argmax prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_loss: f64,
    pub accuracy: f64,
    pub per_class_error: Vec<f64>,
    pub per_class_counts: Vec<usize>,
}

impl Evaluation {
    pub fn overall_error(&self) -> f64 {
        1.0 - self.accuracy
    }
}

/// Argmax-of-logits evaluation; ties resolve to the lowest class index.
/// Classes absent from the dataset report an error rate of zero.
pub fn evaluate(model: &DenseModel, ds: &LabeledDataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(CelError::EmptyPool);
    }
    let m = ds.num_classes();
    let mut wrong = vec![0usize; m];
    let mut counts = vec![0usize; m];
    let mut loss_sum = 0.0;
    for sample in ds.samples() {
        let logits = model.forward(&sample.features)?;
        loss_sum += cross_entropy(&logits, sample.label);
        let pred = argmax(&logits);
        counts[sample.label] += 1;
        if pred != sample.label {
            wrong[sample.label] += 1;
        }
    }
    let total_wrong: usize = wrong.iter().sum();
    let per_class_error = wrong
        .iter()
        .zip(&counts)
        .map(|(&w, &n)| if n == 0 { 0.0 } else { w as f64 / n as f64 })
        .collect();
    Ok(Evaluation {
        mean_loss: loss_sum / ds.len() as f64,
        accuracy: 1.0 - total_wrong as f64 / ds.len() as f64,
        per_class_error,
        per_class_counts: counts,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs one training stage of shuffled mini-batch SGD over `pool` only.
///
/// Stage 1 (`StageInit::Fresh`) seeds the RNG from `config.seed`, draws the
/// initial parameters from it and keeps using it for shuffling; a warm start
/// resumes the checkpoint's parameters and RNG stream. Momentum velocity
/// starts at zero either way, and the learning-rate schedule restarts with
/// drop points relative to this stage's epoch count.
pub fn train_stage(
    init: StageInit,
    pool: &[usize],
    ds: &LabeledDataset,
    eval_ds: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<EpochMetrics>)> {
    config.validate()?;
    if pool.is_empty() {
        return Err(CelError::EmptyPool);
    }
    if let Some(&bad) = pool.iter().find(|&&i| i >= ds.len()) {
        return Err(CelError::DimensionMismatch {
            what: "pool index",
            expected: ds.len(),
            got: bad,
        });
    }

    let (mut model, mut rng, stage, epoch_base) = match init {
        StageInit::Fresh { layer_dims } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let model = DenseModel::random(&layer_dims, &mut rng)?;
            (model, rng, 1, 0)
        }
        StageInit::Warm(ckpt) => {
            let model = ckpt.to_model()?;
            (model, ckpt.rng, ckpt.stage + 1, ckpt.epoch)
        }
    };
    if model.input_dim() != ds.feature_dim() {
        return Err(CelError::DimensionMismatch {
            what: "model input",
            expected: ds.feature_dim(),
            got: model.input_dim(),
        });
    }
    if model.output_dim() != ds.num_classes() {
        return Err(CelError::DimensionMismatch {
            what: "model output",
            expected: ds.num_classes(),
            got: model.output_dim(),
        });
    }

    let mut velocity = Gradients::zeros_like(&model);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut order = pool.to_vec();

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(config, epoch);
        fisher_yates(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (grads, mean_loss) = backward(&model, ds, batch)?;
            if !mean_loss.is_finite() {
                return Err(CelError::Divergence { stage, epoch });
            }
            loss_sum += mean_loss * batch.len() as f64;
            sgd_step(
                &mut model,
                &grads,
                &mut velocity,
                lr,
                config.momentum,
                config.weight_decay,
            );
        }
        let train_loss = loss_sum / pool.len() as f64;

        let (val_loss, accuracy, per_class_error) = match eval_ds {
            Some(eval) => {
                let ev = evaluate(&model, eval)?;
                (
                    Some(ev.mean_loss),
                    Some(ev.accuracy),
                    Some(ev.per_class_error),
                )
            }
            None => (None, None, None),
        };
        metrics.push(EpochMetrics {
            epoch: epoch_base + epoch,
            train_loss,
            val_loss,
            accuracy,
            per_class_error,
        });
    }

    let parameters = model.flatten();
    if parameters.iter().any(|p| !p.is_finite()) {
        return Err(CelError::Divergence {
            stage,
            epoch: config.epochs - 1,
        });
    }
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        layer_dims: model.layer_dims.clone(),
        parameters,
        stage,
        epoch: epoch_base + config.epochs,
        rng,
    };
    Ok((checkpoint, metrics))
}

/// Compares analytic gradients against central finite differences of the
/// mean batch loss; returns the worst relative error over all parameters.
pub fn grad_check(
    model: &DenseModel,
    ds: &LabeledDataset,
    batch: &[usize],
    step: f64,
) -> Result<f64> {
    let analytic = gradients(model, ds, batch)?;
    let flat_analytic = {
        let mut m = DenseModel::zeros(&model.layer_dims)?;
        m.weights = analytic.weights.clone();
        m.biases = analytic.biases.clone();
        m.flatten()
    };
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &a) in flat_analytic.iter().enumerate() {
        let original = probe.get_param(i);
        probe.set_param(i, original + step);
        let plus = batch_loss(&probe, ds, batch)?;
        probe.set_param(i, original - step);
        let minus = batch_loss(&probe, ds, batch)?;
        probe.set_param(i, original);
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
