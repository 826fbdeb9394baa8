//! The delta discriminator: a 1-D convolutional binary classifier over
//! inferred survival curves, the end-to-end prediction pipeline, and the
//! logistic "Linear" baseline over raw bin counts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::error::{Result, VedsaError};
use crate::gamma::{GammaModel, SurvivalCurve};
use crate::tensorkit::{Activation, Adam, Conv1d, Dense, NodeId, PTensor, ParamStore, Tape};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DeltaConfig {
    /// Output channels of the successive conv blocks.
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_window: usize,
    pub dropout: f64,
    pub dense_width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Expected curve length (gamma's t_max).
    pub input_len: usize,
}

impl Default for DeltaConfig {
    fn default() -> Self {
        DeltaConfig {
            conv_channels: vec![8, 16],
            kernel_size: 5,
            pool_window: 2,
            dropout: 0.3,
            dense_width: 32,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            threshold: 0.5,
            input_len: 24,
        }
    }
}

impl DeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(VedsaError::Config("threshold must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(VedsaError::Config("dropout must be in [0,1)".into()));
        }
        if self.conv_channels.is_empty() || self.dense_width == 0 || self.input_len == 0 {
            return Err(VedsaError::Config("empty delta architecture".into()));
        }
        // walk the shapes to catch a kernel longer than its input early
        let mut len = self.input_len;
        for _ in &self.conv_channels {
            if self.kernel_size > len {
                return Err(VedsaError::Config(format!(
                    "kernel size {} exceeds feature length {len}",
                    self.kernel_size
                )));
            }
            len = (len - self.kernel_size + 1) / self.pool_window;
            if len == 0 {
                return Err(VedsaError::Config("architecture pools features away to nothing".into()));
            }
        }
        Ok(())
    }
}

/// One classified cascade.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probability: f64,
    pub label: u8,
}

impl Prediction {
    pub fn new(id: impl Into<String>, probability: f64, threshold: f64) -> Self {
        Prediction { id: id.into(), probability, label: u8::from(probability >= threshold) }
    }
}

pub struct DeltaModel {
    pub config: DeltaConfig,
    pub store: ParamStore,
    convs: Vec<Conv1d>,
    dense: Dense,
    out: Dense,
}

#[derive(Serialize, Deserialize)]
struct DeltaCheckpoint {
    version: u32,
    config: DeltaConfig,
    tensors: Vec<PTensor>,
}

impl DeltaModel {
    pub fn new(config: DeltaConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut convs = Vec::new();
        let mut ch = 1usize;
        let mut len = config.input_len;
        for (i, &out_ch) in config.conv_channels.iter().enumerate() {
            convs.push(Conv1d::new(&mut store, &mut rng, &format!("delta.conv{i}"), ch, out_ch, config.kernel_size, 1));
            ch = out_ch;
            len = (len - config.kernel_size + 1) / config.pool_window;
        }
        let flat = ch * len;
        let dense = Dense::new(&mut store, &mut rng, "delta.fc", flat, config.dense_width, Activation::Relu);
        let out = Dense::new(&mut store, &mut rng, "delta.out", config.dense_width, 1, Activation::Identity);
        Ok(DeltaModel { config, store, convs, dense, out })
    }

    /// Forward pass to the pre-sigmoid logit.
    fn logit_node(
        &self,
        tape: &mut Tape,
        curve: &[f64],
        rng: &mut impl Rng,
        train: bool,
    ) -> Result<NodeId> {
        if curve.len() != self.config.input_len {
            return Err(VedsaError::Structure(format!(
                "curve length {} != configured input length {}",
                curve.len(),
                self.config.input_len
            )));
        }
        let mut x = tape.input(curve.to_vec());
        let mut len = self.config.input_len;
        for conv in &self.convs {
            let y = conv.forward(tape, &self.store, x, len)?;
            let y = tape.relu(y);
            len = conv.out_len(len);
            x = tape.maxpool1d(y, self.config.pool_window, conv.out_ch, len);
            len /= self.config.pool_window;
        }
        let x = tape.dropout(x, self.config.dropout, rng, train);
        let h = self.dense.forward(tape, &self.store, x);
        Ok(self.out.forward(tape, &self.store, h))
    }

    /// Viral probability for one survival curve (dropout off).
    pub fn forward(&self, curve: &SurvivalCurve) -> Result<f64> {
        self.forward_values(&curve.values)
    }

    pub fn forward_values(&self, curve: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logit = self.logit_node(&mut tape, curve, &mut rng, false)?;
        let p = tape.sigmoid(logit);
        let v = tape.scalar(p);
        if !v.is_finite() {
            return Err(VedsaError::NumericHealth("delta output is not finite".into()));
        }
        Ok(v)
    }

    /// Batch-mean binary cross-entropy node; stable softplus(z) - y*z form.
    /// Exposed for gradient checking.
    pub fn batch_loss_node(
        &self,
        tape: &mut Tape,
        batch: &[(&[f64], u8)],
        rng: &mut impl Rng,
        train: bool,
    ) -> Result<NodeId> {
        let mut terms = Vec::with_capacity(batch.len());
        for (curve, label) in batch {
            let z = self.logit_node(tape, curve, rng, train)?;
            let sp = tape.softplus(z);
            let yz = tape.scale(z, *label as f64);
            terms.push(tape.sub(sp, yz));
        }
        let stacked = tape.stack(terms);
        let total = tape.sum(stacked);
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = DeltaCheckpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors: self.store.tensors.clone(),
        };
        std::fs::write(path, serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: DeltaCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(VedsaError::SchemaVersion {
                expected: CHECKPOINT_VERSION.to_string(),
                found: ckpt.version.to_string(),
            });
        }
        let mut model = DeltaModel::new(ckpt.config)?;
        if model.store.tensors.len() != ckpt.tensors.len() {
            return Err(VedsaError::Structure("checkpoint tensor count mismatch".into()));
        }
        for (dst, src) in model.store.tensors.iter_mut().zip(ckpt.tensors) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(VedsaError::Structure(format!(
                    "checkpoint tensor mismatch: expected {} {:?}, found {} {:?}",
                    dst.name, dst.shape, src.name, src.shape
                )));
            }
            dst.values = src.values;
            dst.grad = vec![0.0; dst.values.len()];
        }
        Ok(model)
    }
}

/// Finite-difference check of the full delta graph at a fresh
/// initialization (dropout off). Returns the maximum relative gradient
/// error over a random parameter subsample.
pub fn grad_check_delta(
    config: DeltaConfig,
    curves: &[(Vec<f64>, u8)],
    epsilon: f64,
    max_per_param: usize,
    seed: u64,
) -> Result<f64> {
    if curves.is_empty() {
        return Err(VedsaError::Config("gradient check needs at least one curve".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = DeltaModel::new(config)?;
    let mut store = std::mem::take(&mut model.store);
    let batch: Vec<(&[f64], u8)> = curves.iter().map(|(c, l)| (c.as_slice(), *l)).collect();
    crate::tensorkit::grad_check(
        &mut store,
        |tape, store| {
            let probe = DeltaModel {
                config: model.config.clone(),
                store: store.clone(),
                convs: model.convs.clone(),
                dense: model.dense,
                out: model.out,
            };
            let mut drng = ChaCha8Rng::seed_from_u64(0);
            probe
                .batch_loss_node(tape, &batch, &mut drng, false)
                .expect("curve lengths validated before the check")
        },
        epsilon,
        max_per_param,
        &mut rng,
    )
}

/// Trains delta on (curve, label) pairs with binary cross-entropy.
pub fn train_delta(
    curves: &[(Vec<f64>, u8)],
    config: DeltaConfig,
) -> Result<(DeltaModel, Vec<f64>)> {
    if curves.is_empty() {
        return Err(VedsaError::Config("delta training needs a non-empty dataset".into()));
    }
    let pos = curves.iter().filter(|(_, l)| *l == 1).count();
    if pos == 0 || pos == curves.len() {
        return Err(VedsaError::Config("delta training needs both classes present".into()));
    }
    let mut model = DeltaModel::new(config)?;
    let cfg = model.config.clone();
    let mut adam = Adam::new(&model.store, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..curves.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let batch_size = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&[f64], u8)> =
                chunk.iter().map(|&i| (curves[i].0.as_slice(), curves[i].1)).collect();
            model.store.zero_grads();
            let mut tape = Tape::new();
            let loss = model.batch_loss_node(&mut tape, &batch, &mut rng, true)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(VedsaError::NumericHealth(format!(
                    "delta loss diverged at epoch {epoch} (loss = {value})"
                )));
            }
            tape.backward(loss, &mut model.store)?;
            adam.step(&mut model.store);
            epoch_loss += value;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok((model, trace))
}

/// The end-to-end rho = delta ∘ gamma: bin the censored prefix, infer the
/// survival curve, classify it.
pub fn predict_pipeline(
    gamma: &GammaModel,
    delta: &DeltaModel,
    censored: &Cascade,
    window_hours: f64,
) -> Result<Prediction> {
    if delta.config.input_len != gamma.config.t_max {
        return Err(VedsaError::Structure(format!(
            "gamma t_max {} does not match delta input length {}",
            gamma.config.t_max, delta.config.input_len
        )));
    }
    let bin = gamma.config.bin_length;
    let r = (window_hours / bin).round();
    if r < 1.0 || (r * bin - window_hours).abs() > 1e-9 {
        return Err(VedsaError::Config(format!(
            "window {window_hours}h is not a positive multiple of bin length {bin}h"
        )));
    }
    let prefix = censored.censor(window_hours);
    let binned = crate::cascade::bin_cascade(&prefix, bin, window_hours)?;
    let curve = gamma.infer_survival(&binned)?;
    let p = delta.forward(&curve)?;
    Ok(Prediction::new(censored.id.clone(), p, delta.config.threshold))
}

/// Logistic-regression baseline over ln(1+count) bin vectors.
pub struct LinearModel {
    pub store: ParamStore,
    layer: Dense,
    pub threshold: f64,
    pub input_len: usize,
}

fn log_counts(counts: &[u64]) -> Vec<f64> {
    counts.iter().map(|&c| (1.0 + c as f64).ln()).collect()
}

/// Trains the "Linear" baseline: a single sigmoid unit on log counts.
pub fn train_linear(
    data: &[(Vec<u64>, u8)],
    input_len: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
    threshold: f64,
) -> Result<(LinearModel, Vec<f64>)> {
    if data.is_empty() {
        return Err(VedsaError::Config("linear baseline needs a non-empty dataset".into()));
    }
    let pos = data.iter().filter(|(_, l)| *l == 1).count();
    if pos == 0 || pos == data.len() {
        return Err(VedsaError::Config("linear baseline needs both classes present".into()));
    }
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = Dense::new(&mut store, &mut rng, "linear", input_len, 1, Activation::Identity);
    let mut model = LinearModel { store, layer, threshold, input_len };
    let mut adam = Adam::new(&model.store, learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(64) {
            model.store.zero_grads();
            let mut tape = Tape::new();
            let mut terms = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (counts, label) = &data[i];
                if counts.len() != input_len {
                    return Err(VedsaError::Structure("count vector length mismatch".into()));
                }
                let x = tape.input(log_counts(counts));
                let z = model.layer.forward(&mut tape, &model.store, x);
                let sp = tape.softplus(z);
                let yz = tape.scale(z, *label as f64);
                terms.push(tape.sub(sp, yz));
            }
            let stacked = tape.stack(terms);
            let total = tape.sum(stacked);
            let loss = tape.scale(total, 1.0 / chunk.len() as f64);
            epoch_loss += tape.scalar(loss) * chunk.len() as f64;
            tape.backward(loss, &mut model.store)?;
            adam.step(&mut model.store);
        }
        trace.push(epoch_loss / data.len() as f64);
    }
    Ok((model, trace))
}

impl LinearModel {
    pub fn predict(&self, id: &str, counts: &[u64]) -> Result<Prediction> {
        if counts.len() != self.input_len {
            return Err(VedsaError::Structure("count vector length mismatch".into()));
        }
        let mut tape = Tape::new();
        let x = tape.input(log_counts(counts));
        let z = self.layer.forward(&mut tape, &self.store, x);
        let p = tape.sigmoid(z);
        Ok(Prediction::new(id, tape.scalar(p), self.threshold))
    }
}
