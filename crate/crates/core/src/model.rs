//! Conditional-probability estimators.
//!
//! [`ProbabilityEstimator`] is the contract the rest of the pipeline relies on:
//! a pure map from a feature vector to a normalized distribution over the species
//! catalog. [`SoftmaxModel`] is the reference implementation, a multinomial
//! logistic regression trained by minibatch SGD on the negative log-likelihood,
//! with an optional label-distribution-aware margin for rare classes.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ProbabilityVector, SpeciesId};
use crate::error::{AtlasError, Result};

/// Floor applied to the true-class probability inside the log loss.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Samples per partial-gradient chunk. Fixed so that the reduction order does not
/// depend on the number of threads.
const GRADIENT_CHUNK: usize = 64;

pub trait ProbabilityEstimator: Send + Sync {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityVector>;
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Result<ProbabilityVector> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(AtlasError::NonFinite("logits"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(ProbabilityVector::from_softmax(out))
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `-ln η̂_k`. The probability is floored at [`PROBABILITY_FLOOR`]; the second
/// element reports whether the floor was hit.
pub fn nll_loss_checked(k: SpeciesId, eta_hat: &ProbabilityVector) -> (f64, bool) {
    let p = eta_hat.get(k);
    if p < PROBABILITY_FLOOR {
        (-PROBABILITY_FLOOR.ln(), true)
    } else {
        (-p.ln(), false)
    }
}

pub fn nll_loss(k: SpeciesId, eta_hat: &ProbabilityVector) -> f64 {
    nll_loss_checked(k, eta_hat).0
}

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<SpeciesId>,
}

impl Samples {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_rows(n_features: usize, rows: Vec<(Vec<f64>, SpeciesId)>) -> Result<Self> {
        let mut s = Self::new(n_features);
        for (x, y) in rows {
            s.push(&x, y)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, x: &[f64], label: SpeciesId) -> Result<()> {
        if x.len() != self.n_features {
            return Err(AtlasError::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
                context: "sample features",
            });
        }
        self.features.extend_from_slice(x);
        self.labels.push(label);
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> SpeciesId {
        self.labels[i]
    }

    pub fn labels(&self) -> &[SpeciesId] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], SpeciesId)> {
        (0..self.len()).map(move |i| (self.row(i), self.labels[i]))
    }

    /// Subset by row indices, in the given order.
    pub fn select(&self, rows: &[usize]) -> Samples {
        let mut out = Samples::new(self.n_features);
        for &i in rows {
            out.features.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for y in &self.labels {
            counts[y.index()] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    MarginRebalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs (1-based) after which the learning rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Largest per-class margin; class `k` gets `margin / n_k^(1/4)`.
    pub margin: f64,
    /// First epoch (1-based) with class-frequency reweighting; `None` disables it.
    pub reweight_start: Option<usize>,
    /// Effective-number smoothing for the reweighting, `w_k ∝ (1-β)/(1-β^n_k)`.
    pub reweight_beta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            decay_epochs: Vec::new(),
            decay_factor: 0.1,
            momentum: 0.9,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            loss: LossKind::CrossEntropy,
            margin: 0.5,
            reweight_start: None,
            reweight_beta: 0.9999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AtlasError::InvalidArgument(m.to_owned()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be non-negative");
        }
        if !(0.0..1.0).contains(&self.reweight_beta) {
            return bad("reweight_beta must lie in [0, 1)");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| epoch > e).count();
        self.learning_rate * self.decay_factor.powi(decays as i32)
    }
}

/// Gradient of the loss w.r.t. the model parameters, same layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    fn zeros(d: usize, c: usize) -> Self {
        Self {
            weights: vec![0.0; d * c],
            bias: vec![0.0; c],
        }
    }

    fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// Linear softmax classifier over z-scored features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    n_features: usize,
    n_classes: usize,
    /// `n_features × n_classes`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
    config: TrainConfig,
}

impl SoftmaxModel {
    /// All-zero parameters and identity standardization.
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            n_classes,
            weights: vec![0.0; n_features * n_classes],
            bias: vec![0.0; n_classes],
            feature_mean: vec![0.0; n_features],
            feature_scale: vec![1.0; n_features],
            config: TrainConfig::default(),
        }
    }

    pub fn from_parameters(
        n_features: usize,
        n_classes: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::zeros(n_features, n_classes);
        if weights.len() != n_features * n_classes {
            return Err(AtlasError::DimensionMismatch {
                expected: n_features * n_classes,
                actual: weights.len(),
                context: "weight matrix",
            });
        }
        if bias.len() != n_classes {
            return Err(AtlasError::DimensionMismatch {
                expected: n_classes,
                actual: bias.len(),
                context: "bias",
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(AtlasError::NonFinite("model parameters"));
        }
        m.weights = weights;
        m.bias = bias;
        Ok(m)
    }

    pub fn with_standardization(mut self, mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != self.n_features || scale.len() != self.n_features {
            return Err(AtlasError::DimensionMismatch {
                expected: self.n_features,
                actual: mean.len().min(scale.len()),
                context: "standardization statistics",
            });
        }
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(AtlasError::InvalidArgument("invalid standardization statistics".into()));
        }
        self.feature_mean = mean;
        self.feature_scale = scale;
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn feature_mean(&self) -> &[f64] {
        &self.feature_mean
    }

    pub fn feature_scale(&self) -> &[f64] {
        &self.feature_scale
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(AtlasError::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
                context: "feature vector",
            });
        }
        Ok(())
    }

    /// Logits for an already standardized input.
    pub fn logits_standardized(&self, x_std: &[f64]) -> Vec<f64> {
        let c = self.n_classes;
        let mut z = self.bias.clone();
        for (d, &xd) in x_std.iter().enumerate() {
            let row = &self.weights[d * c..(d + 1) * c];
            for (zk, wk) in z.iter_mut().zip(row) {
                *zk += xd * wk;
            }
        }
        z
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits_standardized(&self.standardize(x)))
    }

    /// Loss and parameter gradient for one standardized sample. `margin` is
    /// subtracted from the true-class logit and `weight` scales both outputs.
    pub fn loss_gradient(&self, x_std: &[f64], y: SpeciesId, margin: f64, weight: f64) -> (f64, Gradient) {
        let mut grad = Gradient::zeros(self.n_features, self.n_classes);
        let (loss, _) = self.accumulate_gradient(x_std, y, margin, weight, &mut grad);
        (loss, grad)
    }

    fn accumulate_gradient(&self, x_std: &[f64], y: SpeciesId, margin: f64, weight: f64, grad: &mut Gradient) -> (f64, bool) {
        let c = self.n_classes;
        let mut p = self.logits_standardized(x_std);
        p[y.index()] -= margin;
        softmax_in_place(&mut p);
        let py = p[y.index()];
        let clamped = py < PROBABILITY_FLOOR;
        let loss = -py.max(PROBABILITY_FLOOR).ln();
        // dL/dz = p - onehot(y)
        p[y.index()] -= 1.0;
        for g in p.iter_mut() {
            *g *= weight;
        }
        for (d, &xd) in x_std.iter().enumerate() {
            let row = &mut grad.weights[d * c..(d + 1) * c];
            for (gw, g) in row.iter_mut().zip(&p) {
                *gw += xd * g;
            }
        }
        for (gb, g) in grad.bias.iter_mut().zip(&p) {
            *gb += g;
        }
        (weight * loss, clamped)
    }

    /// Mean plain cross-entropy over `samples` (raw, unstandardized features).
    pub fn mean_nll(&self, samples: &Samples) -> Result<f64> {
        if samples.is_empty() {
            return Err(AtlasError::Empty("samples"));
        }
        let mut total = 0.0;
        for (x, y) in samples.iter() {
            total += nll_loss(y, &self.predict_proba(x)?);
        }
        Ok(total / samples.len() as f64)
    }

    pub fn predict_proba_batch(&self, xs: &Samples) -> Result<Vec<ProbabilityVector>> {
        xs.iter().map(|(x, _)| self.predict_proba(x)).collect()
    }
}

impl ProbabilityEstimator for SoftmaxModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityVector> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AtlasError::NonFinite("feature vector"));
        }
        softmax(&self.logits_standardized(&self.standardize(x)))
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Sample-weighted mean of the minibatch objective over the epoch.
    pub loss: f64,
    /// Samples whose true-class probability hit the loss floor.
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SoftmaxModel,
    pub history: Vec<EpochReport>,
}

/// Per-class margins `margin / n_k^(1/4)`; classes with no samples get 0.
pub fn class_margins(counts: &[usize], margin: f64) -> Vec<f64> {
    counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { margin / (n as f64).powf(0.25) })
        .collect()
}

/// Inverse effective-number class weights, normalized to average 1 over the
/// classes that have samples.
pub fn class_weights(counts: &[usize], beta: f64) -> Vec<f64> {
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                (1.0 - beta) / (1.0 - beta.powi(n as i32))
            }
        })
        .collect();
    let present = counts.iter().filter(|&&n| n > 0).count();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return raw;
    }
    raw.iter().map(|w| w * present as f64 / total).collect()
}

fn standardization(samples: &Samples) -> (Vec<f64>, Vec<f64>) {
    let d = samples.n_features();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for (x, _) in samples.iter() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for (x, _) in samples.iter() {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

pub fn train(data: &Samples, n_classes: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(data, n_classes, cfg, |_, _| {})
}

/// Minibatch SGD with momentum on the (optionally margin-adjusted, reweighted)
/// negative log-likelihood. `observer` sees the model after every epoch.
///
/// Output is a deterministic function of `(data, n_classes, cfg)`: shuffling uses
/// a seeded ChaCha stream and minibatch gradients are reduced in a fixed chunk
/// order whatever the rayon pool size.
pub fn train_with_observer<F>(
    data: &Samples,
    n_classes: usize,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochReport, &SoftmaxModel),
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(AtlasError::Empty("training samples"));
    }
    if n_classes == 0 {
        return Err(AtlasError::Empty("species catalog"));
    }
    if data.labels().iter().any(|y| y.index() >= n_classes) {
        return Err(AtlasError::InvalidArgument("label outside the species catalog".into()));
    }
    if data.features.iter().any(|v| !v.is_finite()) {
        return Err(AtlasError::NonFinite("training features"));
    }

    let d = data.n_features();
    let (mean, scale) = standardization(data);
    let mut model = SoftmaxModel::zeros(d, n_classes).with_standardization(mean, scale)?;
    model.config = cfg.clone();

    let standardized: Vec<Vec<f64>> = data.iter().map(|(x, _)| model.standardize(x)).collect();
    let counts = data.class_counts(n_classes);
    let margins = match cfg.loss {
        LossKind::CrossEntropy => None,
        LossKind::MarginRebalanced => Some(class_margins(&counts, cfg.margin)),
    };
    let reweight = match (cfg.loss, cfg.reweight_start) {
        (LossKind::MarginRebalanced, Some(start)) => Some((start, class_weights(&counts, cfg.reweight_beta))),
        _ => None,
    };

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = Gradient::zeros(d, n_classes);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let weights = reweight
            .as_ref()
            .filter(|(start, _)| epoch >= *start)
            .map(|(_, w)| w.as_slice());
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        let mut clamped = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let sample_weight = |i: usize| weights.map_or(1.0, |w| w[data.label(i).index()]);
            let margin = |i: usize| margins.as_ref().map_or(0.0, |m| m[data.label(i).index()]);

            let partials: Vec<(Gradient, f64, usize)> = batch
                .par_chunks(GRADIENT_CHUNK)
                .map(|chunk| {
                    let mut g = Gradient::zeros(d, n_classes);
                    let mut loss = 0.0;
                    let mut clamped = 0;
                    for &i in chunk {
                        let (l, hit_floor) = model.accumulate_gradient(
                            &standardized[i],
                            data.label(i),
                            margin(i),
                            sample_weight(i),
                            &mut g,
                        );
                        clamped += hit_floor as usize;
                        loss += l;
                    }
                    (g, loss, clamped)
                })
                .collect();

            let mut grad = Gradient::zeros(d, n_classes);
            let mut batch_loss = 0.0;
            for (g, l, c) in &partials {
                grad.add_assign(g);
                batch_loss += l;
                clamped += c;
            }
            let norm: f64 = match weights {
                None => batch.len() as f64,
                Some(_) => batch.iter().map(|&i| sample_weight(i)).sum(),
            };
            if !batch_loss.is_finite() {
                return Err(AtlasError::Diverged { epoch, loss: batch_loss });
            }
            epoch_loss += batch_loss;
            epoch_weight += norm;

            for ((v, g), w) in velocity.weights.iter_mut().zip(&grad.weights).zip(model.weights.iter_mut()) {
                *v = cfg.momentum * *v + g / norm;
                *w -= lr * *v;
            }
            for ((v, g), b) in velocity.bias.iter_mut().zip(&grad.bias).zip(model.bias.iter_mut()) {
                *v = cfg.momentum * *v + g / norm;
                *b -= lr * *v;
            }
        }

        let loss = epoch_loss / epoch_weight;
        if !loss.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(AtlasError::Diverged { epoch, loss });
        }
        if clamped > 0 {
            log::warn!("epoch {epoch}: {clamped} samples hit the probability floor");
        }
        let report = EpochReport {
            epoch,
            learning_rate: lr,
            loss,
            clamped,
        };
        observer(&report, &model);
        history.push(report);
    }

    Ok(TrainOutcome { model, history })
}

const MODEL_MAGIC: &[u8; 8] = b"ATLASMDL";
const MODEL_VERSION: u32 = 1;

impl SoftmaxModel {
    /// Binary container: magic, version, D, C, JSON config echo, then
    /// little-endian f64 weights (row-major), bias, feature means, feature scales.
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_vec(&self.config).expect("train config serializes");
        let mut out = Vec::with_capacity(
            32 + config.len() + 8 * (self.weights.len() + self.bias.len() + 2 * self.n_features),
        );
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_classes as u32).to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        for v in self
            .weights
            .iter()
            .chain(&self.bias)
            .chain(&self.feature_mean)
            .chain(&self.feature_scale)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| AtlasError::ModelFormat(m.to_owned());
        let mut cursor = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = cursor.split_at(n);
            cursor = tail;
            Ok(head)
        };
        if take(8)? != MODEL_MAGIC {
            return Err(bad("bad magic header"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != MODEL_VERSION {
            return Err(AtlasError::ModelFormat(format!("unsupported version {version}")));
        }
        let d = u32_at(take(4)?) as usize;
        let c = u32_at(take(4)?) as usize;
        let config_len = u32_at(take(4)?) as usize;
        let config: TrainConfig = serde_json::from_slice(take(config_len)?)
            .map_err(|e| AtlasError::ModelFormat(format!("config echo: {e}")))?;
        let mut floats = |n: usize| -> Result<Vec<f64>> {
            let raw = take(n.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
            Ok(raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect())
        };
        let weights = floats(d * c)?;
        let bias = floats(c)?;
        let mean = floats(d)?;
        let scale = floats(d)?;
        if !cursor.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let mut model = SoftmaxModel::from_parameters(d, c, weights, bias)?.with_standardization(mean, scale)?;
        model.config = config;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| AtlasError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| AtlasError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetric_inputs() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);
        let p = softmax(&[1.0, 1.0, 1.0]).unwrap();
        for v in p.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 1000.0]).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(z in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            let p = softmax(&z).unwrap();
            let s: f64 = p.values().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(p.values().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn softmax_shift_invariant(z in prop::collection::vec(-50.0f64..50.0, 1..20), c in -50.0f64..50.0) {
            let a = softmax(&z).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nll_known_values() {
        let p = ProbabilityVector::normalized(vec![1.0, 0.0]).unwrap();
        assert_eq!(nll_loss(SpeciesId(0), &p), 0.0);
        let e = (-1.0f64).exp();
        let p = ProbabilityVector::normalized(vec![e, 1.0 - e]).unwrap();
        assert!((nll_loss(SpeciesId(0), &p) - 1.0).abs() < 1e-15);
        let (loss, clamped) = nll_loss_checked(SpeciesId(1), &ProbabilityVector::normalized(vec![1.0, 0.0]).unwrap());
        assert!(clamped);
        assert!((loss - 12.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn mean_nll_is_mean_of_per_sample_losses() {
        let model = SoftmaxModel::from_parameters(1, 2, vec![1.0, -1.0], vec![0.0, 0.5]).unwrap();
        let samples = Samples::from_rows(
            1,
            vec![(vec![0.3], SpeciesId(0)), (vec![-1.2], SpeciesId(1)), (vec![2.0], SpeciesId(1))],
        )
        .unwrap();
        let per: Vec<f64> = samples
            .iter()
            .map(|(x, y)| nll_loss(y, &model.predict_proba(x).unwrap()))
            .collect();
        let mean = per.iter().sum::<f64>() / 3.0;
        assert!((model.mean_nll(&samples).unwrap() - mean).abs() < 1e-15);
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = SoftmaxModel::zeros(3, 4);
        let p = model.predict_proba(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(p.values(), &[0.25; 4]);
    }

    #[test]
    fn predict_is_pure_and_checks_dimension() {
        let model = SoftmaxModel::from_parameters(2, 2, vec![0.5, -0.5, 1.0, 2.0], vec![0.1, -0.1]).unwrap();
        let a = model.predict_proba(&[0.2, 0.7]).unwrap();
        let b = model.predict_proba(&[0.2, 0.7]).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            model.predict_proba(&[1.0]),
            Err(AtlasError::DimensionMismatch { expected: 2, actual: 1, .. })
        ));
    }

    #[test]
    fn hand_set_two_by_two() {
        // W = [[1, 2], [3, 4]], b = [0, 1], x = (1, -1)
        // z0 = 1*1 + 3*(-1) + 0 = -2 ; z1 = 2*1 + 4*(-1) + 1 = -1
        // p1 = 1 / (1 + e^-1) = 0.7310585786300049
        let model = SoftmaxModel::from_parameters(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0]).unwrap();
        let p = model.predict_proba(&[1.0, -1.0]).unwrap();
        assert!((p.values()[1] - 0.7310585786300049).abs() < 1e-15);
        assert!((p.values()[0] - 0.2689414213699951).abs() < 1e-15);
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            decay_epochs: vec![50, 65],
            decay_factor: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(1), 0.01);
        assert_eq!(cfg.learning_rate_at(50), 0.01);
        assert!((cfg.learning_rate_at(51) - 0.001).abs() < 1e-18);
        assert!((cfg.learning_rate_at(66) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.decay_factor = 0.0;
        assert!(cfg.validate().is_err());
        cfg.decay_factor = 1.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = Samples::new(2);
        assert!(matches!(train(&data, 2, &TrainConfig::default()), Err(AtlasError::Empty(_))));
    }

    #[test]
    fn margins_follow_quarter_power() {
        let m = class_margins(&[1, 16, 0], 0.5);
        assert_eq!(m[0], 0.5);
        assert!((m[1] - 0.25).abs() < 1e-15);
        assert_eq!(m[2], 0.0);
        let w = class_weights(&[1, 100, 0], 0.9999);
        assert!(w[0] > w[1]);
        assert_eq!(w[2], 0.0);
        assert!((w[0] + w[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn model_bytes_round_trip() {
        let model = SoftmaxModel::from_parameters(2, 3, vec![0.1, 0.2, 0.3, -0.4, -0.5, 0.6], vec![1.0, 0.0, -1.0])
            .unwrap()
            .with_standardization(vec![1.0, 2.0], vec![0.5, 3.0])
            .unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..8], b"ATLASMDL");
        let back = SoftmaxModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert!(SoftmaxModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(SoftmaxModel::from_bytes(&corrupt).is_err());
    }
}
