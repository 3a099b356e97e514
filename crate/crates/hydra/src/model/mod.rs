//! The factorized scoring model: one shared base, many per-user heads.
//!
//! The base maps text to a hidden state through hashed n-gram features and
//! a tanh layer: `s = tanh(M · (Eᵀx) + c)`. Each head is a single
//! feed-forward layer producing a two-way softmax:
//! `p = softmax(W2 · tanh(W1 · s + b1) + b2)`, where `p[1]` is the
//! usefulness / preference score.
//!
//! Training updates the base and exactly one head per sample; fitting a new
//! user's head leaves the base bitwise untouched. All gradients are derived
//! by hand and checked against finite differences in the test suite.

mod encoder;
mod io;

pub use encoder::{hash_features, TextEncoderConfig};

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HydraError, Result};
use crate::hashing::{fnv1a64, mix64};

/// Output dimension of every head: {not useful, useful}.
pub const OUT_DIM: usize = 2;

/// Log clamp bound for the cross-entropy loss.
pub const LOSS_EPS: f64 = 1e-12;

/// Shared base parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams {
    /// Projection from hashed features to the hidden space, `hash_dim × d`.
    pub embed: Array2<f64>,
    /// Hidden transform, `d × d`.
    pub mix: Array2<f64>,
    /// Hidden bias, `d`.
    pub bias: Array1<f64>,
}

/// One user's head: a single feed-forward layer over the hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl HeadParams {
    /// Little-endian byte image; used for bitwise isolation checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for tensor in [&self.w1, &self.w2] {
            for v in tensor.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for tensor in [&self.b1, &self.b2] {
            for v in tensor.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// SGD settings. Batches average gradients over the whole batch; the base
/// accumulates every sample's gradient while each head only sees its own
/// samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 2,
            batch_size: 64,
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(HydraError::Config("learning rate must be positive".into()));
        }
        if self.epochs < 1 {
            return Err(HydraError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(HydraError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One training sample routed to a head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub head_key: String,
    pub text: String,
    pub label: u8,
}

/// Gradients of the loss with respect to the base and one head. The embed
/// gradient is sparse: rows not touched by the sample's features are zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embed_rows: Vec<(usize, Array1<f64>)>,
    pub mix: Array2<f64>,
    pub bias: Array1<f64>,
    pub head: HeadGrads,
}

#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Gradients {
    /// Dense embed gradient, for comparison against numeric oracles.
    pub fn embed_dense(&self, hash_dim: usize, hidden_dim: usize) -> Array2<f64> {
        let mut dense = Array2::zeros((hash_dim, hidden_dim));
        for (row, grad) in &self.embed_rows {
            for (j, v) in grad.iter().enumerate() {
                dense[[*row, j]] = *v;
            }
        }
        dense
    }
}

struct Forward {
    features: Vec<(usize, f64)>,
    e: Array1<f64>,
    s: Array1<f64>,
    h: Array1<f64>,
    p: Array1<f64>,
}

/// Shared base plus a keyed table of per-user heads.
pub struct FactorizedModel {
    config: TextEncoderConfig,
    base: BaseParams,
    heads: BTreeMap<String, HeadParams>,
    rng_seed: u64,
}

fn uniform_array2(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

fn uniform_array1(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.random_range(-bound..=bound))
}

impl FactorizedModel {
    /// Fresh model with a seeded base and no heads.
    pub fn new(config: TextEncoderConfig, rng_seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(rng_seed));
        let base = BaseParams {
            embed: uniform_array2(&mut rng, config.hash_dim, d, 1.0),
            mix: uniform_array2(&mut rng, d, d, 1.0 / (d as f64).sqrt()),
            bias: Array1::zeros(d),
        };
        Ok(FactorizedModel {
            config,
            base,
            heads: BTreeMap::new(),
            rng_seed,
        })
    }

    /// Reassemble a model from explicit parts (persistence, numeric
    /// checks).
    pub fn from_parts(
        config: TextEncoderConfig,
        base: BaseParams,
        heads: BTreeMap<String, HeadParams>,
        rng_seed: u64,
    ) -> Self {
        FactorizedModel {
            config,
            base,
            heads,
            rng_seed,
        }
    }

    pub fn config(&self) -> &TextEncoderConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn base(&self) -> &BaseParams {
        &self.base
    }

    /// Mutable base access for optimizers and numeric checks.
    pub fn base_mut(&mut self) -> &mut BaseParams {
        &mut self.base
    }

    /// Mutable head access for optimizers and numeric checks.
    pub fn head_mut(&mut self, key: &str) -> Option<&mut HeadParams> {
        self.heads.get_mut(key)
    }

    pub fn head_keys(&self) -> impl Iterator<Item = &String> {
        self.heads.keys()
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn has_head(&self, key: &str) -> bool {
        self.heads.contains_key(key)
    }

    pub fn head(&self, key: &str) -> Option<&HeadParams> {
        self.heads.get(key)
    }

    pub fn remove_head(&mut self, key: &str) -> Option<HeadParams> {
        self.heads.remove(key)
    }

    /// Byte image of one head, for bitwise comparisons.
    pub fn head_bytes(&self, key: &str) -> Option<Vec<u8>> {
        self.heads.get(key).map(|h| h.to_bytes())
    }

    /// Byte image of the base, for frozen-base checks.
    pub fn base_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in self
            .base
            .embed
            .iter()
            .chain(self.base.mix.iter())
            .chain(self.base.bias.iter())
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn init_head(&self, key: &str) -> HeadParams {
        let d = self.config.hidden_dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(fnv1a64(key.as_bytes()) ^ self.rng_seed));
        HeadParams {
            w1: uniform_array2(&mut rng, d, d, bound),
            b1: uniform_array1(&mut rng, d, bound),
            w2: uniform_array2(&mut rng, OUT_DIM, d, bound),
            b2: uniform_array1(&mut rng, OUT_DIM, bound),
        }
    }

    /// Create the head for `key` if it does not exist yet. Initialization is
    /// seeded by the key and the model seed, so recreation is reproducible.
    pub fn ensure_head(&mut self, key: &str) -> &HeadParams {
        if !self.heads.contains_key(key) {
            let head = self.init_head(key);
            self.heads.insert(key.to_string(), head);
        }
        &self.heads[key]
    }

    /// Hidden state for a text: `tanh(M · (Eᵀx) + c)`.
    pub fn encode(&self, text: &str) -> Array1<f64> {
        self.encode_forward(text).s
    }

    fn project(&self, features: &[(usize, f64)]) -> Array1<f64> {
        let mut e = Array1::zeros(self.config.hidden_dim);
        for (row, value) in features {
            e.scaled_add(*value, &self.base.embed.row(*row));
        }
        e
    }

    fn encode_forward(&self, text: &str) -> EncodeState {
        let features = hash_features(text, &self.config);
        let e = self.project(&features);
        let z = self.base.mix.dot(&e) + &self.base.bias;
        let s = z.mapv(f64::tanh);
        EncodeState { features, e, s }
    }

    fn forward(&self, head: &HeadParams, text: &str) -> Forward {
        let enc = self.encode_forward(text);
        let h = (head.w1.dot(&enc.s) + &head.b1).mapv(f64::tanh);
        let logits = head.w2.dot(&h) + &head.b2;
        let p = softmax(&logits);
        Forward {
            features: enc.features,
            e: enc.e,
            s: enc.s,
            h,
            p,
        }
    }

    /// Class probabilities for the text under `key`'s head.
    pub fn predict(&self, key: &str, text: &str) -> Result<Array1<f64>> {
        let head = self
            .heads
            .get(key)
            .ok_or_else(|| HydraError::MissingHead(key.to_string()))?;
        Ok(self.forward(head, text).p)
    }

    /// The usefulness score `p[1]`.
    pub fn score(&self, key: &str, text: &str) -> Result<f64> {
        Ok(self.predict(key, text)?[1])
    }

    /// Loss and gradients for one sample; no parameters change.
    pub fn gradients(&self, key: &str, text: &str, label: u8) -> Result<(f64, Gradients)> {
        let head = self
            .heads
            .get(key)
            .ok_or_else(|| HydraError::MissingHead(key.to_string()))?;
        let fwd = self.forward(head, text);
        let loss = ce_loss(&fwd.p, label);
        let grads = self.backward(head, &fwd, label);
        Ok((loss, grads))
    }

    fn backward(&self, head: &HeadParams, fwd: &Forward, label: u8) -> Gradients {
        let y = label as f64;
        // With a two-way softmax the loss is plain cross entropy against the
        // one-hot target [1-y, y], so dL/dlogits = p - target.
        let mut dlogits = fwd.p.clone();
        dlogits[0] -= 1.0 - y;
        dlogits[1] -= y;

        let dw2 = outer(&dlogits, &fwd.h);
        let db2 = dlogits.clone();
        let dh = head.w2.t().dot(&dlogits);
        let dhin = &dh * &fwd.h.mapv(|v| 1.0 - v * v);
        let dw1 = outer(&dhin, &fwd.s);
        let db1 = dhin.clone();
        let ds = head.w1.t().dot(&dhin);
        let dz = &ds * &fwd.s.mapv(|v| 1.0 - v * v);
        let dmix = outer(&dz, &fwd.e);
        let dbias = dz.clone();
        let de = self.base.mix.t().dot(&dz);
        let embed_rows: Vec<(usize, Array1<f64>)> = fwd
            .features
            .iter()
            .map(|(row, value)| (*row, &de * *value))
            .collect();

        Gradients {
            embed_rows,
            mix: dmix,
            bias: dbias,
            head: HeadGrads {
                w1: dw1,
                b1: db1,
                w2: dw2,
                b2: db2,
            },
        }
    }

    fn apply_gradients(&mut self, key: &str, grads: &Gradients, lr: f64, clip: Option<f64>) {
        let scale = match clip {
            Some(max_norm) if max_norm > 0.0 => {
                let norm = grad_norm(grads);
                if norm > max_norm {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            _ => 1.0,
        };
        let step = lr * scale;
        for (row, grad) in &grads.embed_rows {
            let mut embed_row = self.base.embed.row_mut(*row);
            embed_row.scaled_add(-step, grad);
        }
        self.base.mix.scaled_add(-step, &grads.mix);
        self.base.bias.scaled_add(-step, &grads.bias);
        let head = self.heads.get_mut(key).expect("head checked by caller");
        head.w1.scaled_add(-step, &grads.head.w1);
        head.b1.scaled_add(-step, &grads.head.b1);
        head.w2.scaled_add(-step, &grads.head.w2);
        head.b2.scaled_add(-step, &grads.head.b2);
    }

    fn apply_head_gradients(&mut self, key: &str, grads: &HeadGrads, lr: f64) {
        let head = self.heads.get_mut(key).expect("head checked by caller");
        head.w1.scaled_add(-lr, &grads.w1);
        head.b1.scaled_add(-lr, &grads.b1);
        head.w2.scaled_add(-lr, &grads.w2);
        head.b2.scaled_add(-lr, &grads.b2);
    }

    /// One SGD step on the base and on `key`'s head; every other head is
    /// untouched. Returns the pre-step loss.
    pub fn train_step(
        &mut self,
        key: &str,
        text: &str,
        label: u8,
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let (loss, grads) = self.gradients(key, text, label)?;
        if cfg.learning_rate != 0.0 {
            self.apply_gradients(key, &grads, cfg.learning_rate, cfg.clip);
        }
        Ok(loss)
    }

    /// Joint training over many users: per epoch, examples are shuffled by
    /// the seeded RNG and processed in batches. Gradients are averaged over
    /// the batch; heads are created on first sight. Returns the mean loss
    /// per epoch.
    pub fn train_multi_user(
        &mut self,
        examples: &[TrainExample],
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        for ex in examples {
            self.ensure_head(&ex.head_key);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);

        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                loss_sum += self.train_batch(examples, chunk, cfg)?;
            }
            let mean = if examples.is_empty() {
                0.0
            } else {
                loss_sum / examples.len() as f64
            };
            epoch_losses.push(mean);
        }
        Ok(epoch_losses)
    }

    fn train_batch(
        &mut self,
        examples: &[TrainExample],
        chunk: &[usize],
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let batch_len = chunk.len() as f64;
        let d = self.config.hidden_dim;
        let mut embed_acc: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
        let mut mix_acc: Array2<f64> = Array2::zeros((d, d));
        let mut bias_acc: Array1<f64> = Array1::zeros(d);
        let mut head_acc: BTreeMap<&str, HeadGrads> = BTreeMap::new();
        let mut loss_sum = 0.0;

        for &i in chunk {
            let ex = &examples[i];
            let (loss, grads) = self.gradients(&ex.head_key, &ex.text, ex.label)?;
            loss_sum += loss;
            for (row, grad) in &grads.embed_rows {
                embed_acc
                    .entry(*row)
                    .and_modify(|acc| *acc += grad)
                    .or_insert_with(|| grad.clone());
            }
            mix_acc += &grads.mix;
            bias_acc += &grads.bias;
            head_acc
                .entry(ex.head_key.as_str())
                .and_modify(|acc| {
                    acc.w1 += &grads.head.w1;
                    acc.b1 += &grads.head.b1;
                    acc.w2 += &grads.head.w2;
                    acc.b2 += &grads.head.b2;
                })
                .or_insert(grads.head);
        }

        let mut lr = cfg.learning_rate / batch_len;
        if let Some(max_norm) = cfg.clip {
            if max_norm > 0.0 {
                let mut sq = 0.0;
                for grad in embed_acc.values() {
                    sq += grad.iter().map(|v| v * v).sum::<f64>();
                }
                sq += mix_acc.iter().map(|v| v * v).sum::<f64>();
                sq += bias_acc.iter().map(|v| v * v).sum::<f64>();
                for grads in head_acc.values() {
                    sq += grads.w1.iter().map(|v| v * v).sum::<f64>();
                    sq += grads.b1.iter().map(|v| v * v).sum::<f64>();
                    sq += grads.w2.iter().map(|v| v * v).sum::<f64>();
                    sq += grads.b2.iter().map(|v| v * v).sum::<f64>();
                }
                let norm = sq.sqrt() / batch_len;
                if norm > max_norm {
                    lr *= max_norm / norm;
                }
            }
        }
        for (row, grad) in &embed_acc {
            self.base.embed.row_mut(*row).scaled_add(-lr, grad);
        }
        self.base.mix.scaled_add(-lr, &mix_acc);
        self.base.bias.scaled_add(-lr, &bias_acc);
        let keys: Vec<String> = head_acc.keys().map(|k| k.to_string()).collect();
        for key in keys {
            let grads = head_acc.remove(key.as_str()).unwrap();
            self.apply_head_gradients(&key, &grads, lr);
        }
        Ok(loss_sum)
    }

    /// Fit a brand-new head on `examples` with the base frozen. Per-sample
    /// updates run in the given order for `cfg.epochs` epochs. Errors if the
    /// user already has a head. Returns the mean loss per epoch.
    pub fn fit_new_head(
        &mut self,
        key: &str,
        examples: &[(String, u8)],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if self.heads.contains_key(key) {
            return Err(HydraError::HeadExists(key.to_string()));
        }
        let head = self.init_head(key);
        self.heads.insert(key.to_string(), head);

        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let mut loss_sum = 0.0;
            for (text, label) in examples {
                let (loss, grads) = self.gradients(key, text, *label)?;
                loss_sum += loss;
                if cfg.learning_rate != 0.0 {
                    self.apply_head_gradients(key, &grads.head, cfg.learning_rate);
                }
            }
            let mean = if examples.is_empty() {
                0.0
            } else {
                loss_sum / examples.len() as f64
            };
            epoch_losses.push(mean);
        }
        Ok(epoch_losses)
    }
}

struct EncodeState {
    features: Vec<(usize, f64)>,
    e: Array1<f64>,
    s: Array1<f64>,
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

fn outer(col: &Array1<f64>, row: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((col.len(), row.len()));
    for (i, c) in col.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            out[[i, j]] = c * r;
        }
    }
    out
}

fn grad_norm(grads: &Gradients) -> f64 {
    let mut sq = 0.0;
    for (_, g) in &grads.embed_rows {
        sq += g.iter().map(|v| v * v).sum::<f64>();
    }
    sq += grads.mix.iter().map(|v| v * v).sum::<f64>();
    sq += grads.bias.iter().map(|v| v * v).sum::<f64>();
    sq += grads.head.w1.iter().map(|v| v * v).sum::<f64>();
    sq += grads.head.b1.iter().map(|v| v * v).sum::<f64>();
    sq += grads.head.w2.iter().map(|v| v * v).sum::<f64>();
    sq += grads.head.b2.iter().map(|v| v * v).sum::<f64>();
    sq.sqrt()
}

/// Binary cross entropy on the positive-class probability `p[1]`, with logs
/// clamped away from zero.
pub fn ce_loss(p: &Array1<f64>, label: u8) -> f64 {
    let y = label as f64;
    let p1 = p[1].clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    -y * p1.ln() - (1.0 - y) * (1.0 - p1).ln()
}

/// Standalone head evaluation used by tests and diagnostics:
/// `softmax(W2 · tanh(W1 · s + b1) + b2)`.
pub fn head_forward(head: &HeadParams, s: &Array1<f64>) -> Result<Array1<f64>> {
    if head.w1.ncols() != s.len() {
        return Err(HydraError::Shape(format!(
            "head expects hidden dim {}, got {}",
            head.w1.ncols(),
            s.len()
        )));
    }
    let h = (head.w1.dot(s) + &head.b1).mapv(f64::tanh);
    Ok(softmax(&(head.w2.dot(&h) + &head.b2)))
}

#[cfg(test)]
mod tests;
