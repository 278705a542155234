//! Feed-forward binary classification head over precomputed embeddings.
//!
//! ReLU hidden layers, a 2-way softmax output, SGD with momentum on
//! cross-entropy, and per-epoch model selection by validation F_β.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::{read_text_embeddings, EmbeddingSpace};
use crate::metrics::{binary_f1, Prf};
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_HIDDEN: [usize; 3] = [512, 256, 128];
pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Step used by [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
/// Denominator floor of the relative error in [`gradient_check`].
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// One affine layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
}

/// `[input, hidden..., 2]` with the default hidden widths.
pub fn default_dims(input: usize) -> Vec<usize> {
    std::iter::once(input).chain(DEFAULT_HIDDEN).chain([NUM_CLASSES]).collect()
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 layer dims, got {}", dims.len())));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("layer dim {pos} is zero")));
    }
    if dims[dims.len() - 1] != NUM_CLASSES {
        return Err(Error::invalid(format!("output dim must be {NUM_CLASSES}, got {}", dims[dims.len() - 1])));
    }
    Ok(())
}

/// Xavier-uniform weights from a seeded ChaCha8 stream, zero biases.
pub fn init_mlp(layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
    check_dims(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weights: (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect(),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpModel {
        layer_dims: layer_dims.to_vec(),
        layers,
    })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn affine(layer: &Layer, input: &[f64]) -> Vec<f64> {
    layer
        .bias
        .iter()
        .enumerate()
        .map(|(o, b)| {
            let row = &layer.weights[o * input.len()..(o + 1) * input.len()];
            b + crate::linalg::dot(row, input)
        })
        .collect()
}

impl MlpModel {
    /// Builds a model from explicit layers, checking every shape.
    pub fn from_layers(layer_dims: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        check_dims(&layer_dims)?;
        if layers.len() != layer_dims.len() - 1 {
            return Err(Error::invalid(format!(
                "{} layer dims need {} layers, got {}",
                layer_dims.len(),
                layer_dims.len() - 1,
                layers.len()
            )));
        }
        for (k, (layer, w)) in layers.iter().zip(layer_dims.windows(2)).enumerate() {
            if layer.weights.len() != w[0] * w[1] || layer.bias.len() != w[1] {
                return Err(Error::invalid(format!("layer {k} does not match dims {} -> {}", w[0], w[1])));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {k} has a non-finite parameter")));
            }
        }
        Ok(MlpModel { layer_dims, layers })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer; the last entry holds the logits.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let z = if k == 0 {
                affine(layer, x)
            } else {
                let a: Vec<f64> = out[k - 1].iter().map(|v| v.max(0.0)).collect();
                affine(layer, &a)
            };
            out.push(z);
        }
        out
    }

    /// Class probabilities; they sum to 1.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(softmax(self.pre_activations(x).last().expect("at least one layer")))
    }

    /// Probability of class 1.
    pub fn positive_probability(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?[1])
    }

    /// Cross-entropy of `label` and its gradient, shaped like the layers.
    pub fn loss_and_gradient(&self, x: &[f64], label: u8) -> Result<(f64, Vec<Layer>)> {
        self.check_input(x)?;
        check_label(label)?;
        let zs = self.pre_activations(x);
        let probs = softmax(zs.last().expect("at least one layer"));
        let loss = -probs[label as usize].max(f64::MIN_POSITIVE).ln();

        let mut delta: Vec<f64> = probs.clone();
        delta[label as usize] -= 1.0;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input: Vec<f64> = if k == 0 { x.to_vec() } else { zs[k - 1].iter().map(|v| v.max(0.0)).collect() };
            let n_in = input.len();
            let mut weights = vec![0.0; delta.len() * n_in];
            for (o, d) in delta.iter().enumerate() {
                for (i, a) in input.iter().enumerate() {
                    weights[o * n_in + i] = d * a;
                }
            }
            grads.push(Layer {
                weights,
                bias: delta.clone(),
            });
            if k > 0 {
                let w = &self.layers[k].weights;
                delta = (0..n_in)
                    .map(|i| {
                        if zs[k - 1][i] > 0.0 {
                            delta.iter().enumerate().map(|(o, d)| d * w[o * n_in + i]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        grads.reverse();
        Ok((loss, grads))
    }

    pub fn loss(&self, x: &[f64], label: u8) -> Result<f64> {
        self.check_input(x)?;
        check_label(label)?;
        let p = self.forward(x)?;
        Ok(-p[label as usize].max(f64::MIN_POSITIVE).ln())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Saves as versioned JSON; `config` is stored alongside when given.
    pub fn to_json(&self, config: Option<&TrainConfig>) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: self.layer_dims.clone(),
            activation: "relu".into(),
            layers: self.layers.clone(),
            config: config.cloned(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(content: &str) -> Result<(Self, Option<TrainConfig>)> {
        let file: ModelFile = serde_json::from_str(content)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported model format version {}", file.format_version)));
        }
        if file.activation != "relu" {
            return Err(Error::invalid(format!("unsupported activation `{}`", file.activation)));
        }
        Ok((MlpModel::from_layers(file.layer_dims, file.layers)?, file.config))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<TrainConfig>)> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MlpModel::from_json(&content).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }
}

fn check_label(label: u8) -> Result<()> {
    if label as usize >= NUM_CLASSES {
        return Err(Error::invalid(format!("label {label} is not 0 or 1")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    activation: String,
    layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<TrainConfig>,
}

/// Largest relative error between the analytic gradient and central
/// differences, `|a − n| / max(|a| + |n|, GRADIENT_CHECK_FLOOR)`.
pub fn gradient_check(model: &MlpModel, x: &[f64], label: u8) -> Result<f64> {
    let (_, analytic) = model.loss_and_gradient(x, label)?;
    let analytic: Vec<f64> = analytic.into_iter().flat_map(|l| l.weights.into_iter().chain(l.bias)).collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, a) in analytic.into_iter().enumerate() {
        let original = *probe.params_mut().nth(k).expect("parameter index");
        *probe.params_mut().nth(k).expect("parameter index") = original + GRADIENT_CHECK_STEP;
        let plus = probe.loss(x, label)?;
        *probe.params_mut().nth(k).expect("parameter index") = original - GRADIENT_CHECK_STEP;
        let minus = probe.loss(x, label)?;
        *probe.params_mut().nth(k).expect("parameter index") = original;
        let numeric = (plus - minus) / (2.0 * GRADIENT_CHECK_STEP);
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            beta: 1.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.beta > 0.0
            && self.beta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid training config {self:?}")))
        }
    }
}

/// Feature vectors with binary labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, x: Vec<Vec<f64>>, y: Vec<u8>) -> Result<Self> {
        if ids.len() != x.len() || x.len() != y.len() {
            return Err(Error::invalid("dataset ids, vectors and labels differ in length"));
        }
        if let Some(d) = x.first().map(Vec::len) {
            if let Some(bad) = x.iter().position(|v| v.len() != d) {
                return Err(Error::invalid(format!("example `{}` has dim {}, expected {d}", ids[bad], x[bad].len())));
            }
        }
        for &l in &y {
            check_label(l)?;
        }
        Ok(Dataset { ids, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.x.first().map(Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the selected snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Epoch with the highest validation F; the earliest wins ties.
pub fn select_best_epoch(history: &[EpochRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, rec) in history.iter().enumerate() {
        if best.is_none_or(|b| rec.valid.f > history[b].valid.f) {
            best = Some(k);
        }
    }
    best
}

pub fn mean_loss(model: &MlpModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, &y) in data.x.iter().zip(&data.y) {
        total += model.loss(x, y)?;
    }
    Ok(total / data.len() as f64)
}

/// Trains with validation F_β on `valid` driving model selection.
pub fn train(model: &MlpModel, train_set: &Dataset, valid: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    if valid.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    if valid.dim() != Some(model.input_dim()) {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: valid.dim().unwrap_or(0),
        });
    }
    let beta = cfg.beta;
    train_with_validator(model, train_set, cfg, |m| {
        let pred = predict_labels(m, &valid.x)?;
        binary_f1(&valid.y, &pred, beta)
    })
}

/// Training loop with a caller-supplied validation score per epoch.
///
/// Each epoch shuffles the training set, takes momentum steps on mean
/// mini-batch gradients, then asks `validate` for the epoch's score. The
/// returned model is the snapshot from the best-scoring epoch; training
/// stops once `patience` epochs pass without a new best.
pub fn train_with_validator<F>(model: &MlpModel, train_set: &Dataset, cfg: &TrainConfig, mut validate: F) -> Result<(MlpModel, TrainHistory)>
where
    F: FnMut(&MlpModel) -> Result<Prf>,
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if train_set.dim() != Some(model.input_dim()) {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: train_set.dim().unwrap_or(0),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = model.clone();
    let mut velocity: Vec<f64> = vec![0.0; current.num_parameters()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, MlpModel)> = None;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; velocity.len()];
            for &i in batch {
                let (_, g) = current.loss_and_gradient(&train_set.x[i], train_set.y[i])?;
                for (acc, v) in grad.iter_mut().zip(g.iter().flat_map(|l| l.weights.iter().chain(&l.bias))) {
                    *acc += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in current.params_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                *p += *v;
            }
        }
        if current.params_mut().any(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("training diverged in epoch {epoch}; lower the learning rate")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: mean_loss(&current, train_set)?,
            valid: validate(&current)?,
        };
        log::debug!("epoch {epoch}: loss {:.6}, valid F {:.4}", record.train_loss, record.valid.f);
        epochs.push(record);
        let k = epochs.len() - 1;
        if select_best_epoch(&epochs) == Some(k) {
            best = Some((k, current.clone()));
        }
        let best_k = best.as_ref().map_or(0, |b| b.0);
        if k - best_k >= cfg.patience && k + 1 < cfg.max_epochs {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, model) = best.expect("at least one epoch ran");
    Ok((
        model,
        TrainHistory {
            epochs,
            best_epoch,
            stopped_early,
        },
    ))
}

/// Positive-class probabilities, in input order.
pub fn predict_proba(model: &MlpModel, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| model.positive_probability(x)).collect()
}

/// Label 1 exactly when the positive probability exceeds 0.5.
pub fn predict_labels(model: &MlpModel, xs: &[Vec<f64>]) -> Result<Vec<u8>> {
    Ok(predict_proba(model, xs)?.into_iter().map(|p| u8::from(p > 0.5)).collect())
}

/// Reads an example-embedding file (`n d` header, then `id v1 .. vd`).
pub fn load_example_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_text_embeddings(std::io::BufReader::new(file), path, None)
}

/// One row per document, looked up by document id. Unlabelled documents
/// get label 0 unless `require_labels` is set.
pub fn dataset_from_corpus(corpus: &Corpus, embeddings: &EmbeddingSpace, require_labels: bool) -> Result<Dataset> {
    let mut ids = Vec::with_capacity(corpus.len());
    let mut x = Vec::with_capacity(corpus.len());
    let mut y = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let row = embeddings
            .lookup(&doc.id)
            .ok_or_else(|| Error::invalid(format!("no embedding row for example `{}`", doc.id)))?;
        let label = match (doc.label, require_labels) {
            (Some(l), _) => l,
            (None, false) => 0,
            (None, true) => return Err(Error::invalid(format!("example `{}` has no label", doc.id))),
        };
        ids.push(doc.id.clone());
        x.push(row.to_vec());
        y.push(label);
    }
    Dataset::new(ids, x, y)
}

/// Predicted label per document, in corpus order.
pub fn predict_corpus(model: &MlpModel, embeddings: &EmbeddingSpace, corpus: &Corpus) -> Result<Vec<(String, u8)>> {
    let data = dataset_from_corpus(corpus, embeddings, false)?;
    let labels = predict_labels(model, &data.x)?;
    Ok(data.ids.into_iter().zip(labels).collect())
}
