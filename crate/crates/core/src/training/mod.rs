//! Supervised binary training with balanced batches and plateau scheduling.

mod metrics;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, auprc, auroc, bce_loss, ece, reliability_bins, Metrics, MetricsReport, ReliabilityBin};

use crate::diffcore::{reborrow, value_and_grad, AdamState, Parameters, Tensor};
use crate::error::{Error, Result};
use crate::extgnan::Architecture;
use crate::signal_graphs::GraphSet;
use crate::superman::SupermanModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub layers: usize,
    pub seed: u64,
    pub upsample_minority: bool,
    /// Stop after this many optimiser steps, if set.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr_max: 1e-3,
            lr_min: 1e-8,
            plateau_factor: 0.5,
            plateau_patience: 100,
            weight_decay: 1e-5,
            dropout: 0.1,
            hidden: 32,
            layers: 3,
            seed: 0,
            upsample_minority: true,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    /// Hard invariants; violating any of these makes training meaningless.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size < 2 && self.upsample_minority {
            return bad("balanced batches need batch_size >= 2");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_max.is_finite() && self.lr_max > 0.0) {
            return bad("lr_max must be positive");
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return bad("lr_min must lie in [0, lr_max]");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.hidden == 0 || self.layers == 0 {
            return bad("hidden and layers must be positive");
        }
        Ok(())
    }

    /// Settings outside the published search space; empty when inside.
    pub fn outside_search_space(&self) -> Vec<String> {
        let mut out = Vec::new();
        if ![16, 32].contains(&self.batch_size) {
            out.push(format!("batch_size {} not in {{16, 32}}", self.batch_size));
        }
        if !(1e-4..=1e-2).contains(&self.lr_max) {
            out.push(format!("lr_max {} not in [1e-4, 1e-2]", self.lr_max));
        }
        if !(1e-8..=1e-7).contains(&self.lr_min) {
            out.push(format!("lr_min {} not in [1e-8, 1e-7]", self.lr_min));
        }
        if !(0.2..=0.9).contains(&self.plateau_factor) {
            out.push(format!("plateau_factor {} not in [0.2, 0.9]", self.plateau_factor));
        }
        if ![0.1, 0.2].contains(&self.dropout) {
            out.push(format!("dropout {} not in {{0.1, 0.2}}", self.dropout));
        }
        if ![32, 64].contains(&self.hidden) {
            out.push(format!("hidden {} not in {{32, 64}}", self.hidden));
        }
        if !(3..=5).contains(&self.layers) {
            out.push(format!("layers {} not in {{3, 4, 5}}", self.layers));
        }
        out
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { hidden: self.hidden, layers: self.layers, dropout: self.dropout, ..Architecture::default() }
    }
}

/// Emits batches of dataset indices, optionally class-balanced by drawing
/// the minority class with replacement.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    minority: Vec<usize>,
    majority: Vec<usize>,
    all: Vec<usize>,
    batch_size: usize,
    upsample: bool,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(labels: &[u8], batch_size: usize, upsample: bool, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
        if upsample && (pos.is_empty() || neg.is_empty()) {
            return Err(Error::InvalidConfig("minority upsampling needs both classes in the training set".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidConfig("empty training set".into()));
        }
        let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
        let mut s = Self {
            minority,
            majority,
            all: (0..labels.len()).collect(),
            batch_size,
            upsample,
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.reshuffle();
        Ok(s)
    }

    fn reshuffle(&mut self) {
        if self.upsample {
            self.majority.shuffle(&mut self.rng);
        } else {
            self.all.shuffle(&mut self.rng);
        }
        self.cursor = 0;
    }

    /// Number of batches that make up one pass over the data.
    pub fn batches_per_epoch(&self) -> usize {
        self.all.len().div_ceil(self.batch_size)
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if !self.upsample {
            if self.cursor >= self.all.len() {
                self.reshuffle();
            }
            let end = (self.cursor + self.batch_size).min(self.all.len());
            let out = self.all[self.cursor..end].to_vec();
            self.cursor = end;
            return out;
        }
        let n_min = self.batch_size / 2;
        let mut out = Vec::with_capacity(self.batch_size);
        for _ in 0..n_min {
            out.push(self.minority[self.rng.random_range(0..self.minority.len())]);
        }
        for _ in n_min..self.batch_size {
            if self.cursor >= self.majority.len() {
                self.reshuffle();
            }
            out.push(self.majority[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        if !self.upsample {
            self.reshuffle();
        }
        (0..self.batches_per_epoch()).map(|_| self.next_batch()).collect()
    }
}

/// One epoch of class-balanced batches.
pub fn minority_upsample(labels: &[u8], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    Ok(BatchSampler::new(labels, batch_size, true, seed)?.epoch())
}

/// Multiplies the rate by `factor` once the monitored loss has failed to
/// improve (relative threshold 1e-4) for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    const THRESHOLD: f64 = 1e-4;

    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        Self { lr, factor, patience, min_lr, best: f64::INFINITY, bad_epochs: 0 }
    }

    pub fn step(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - Self::THRESHOLD) {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs >= self.patience.max(1) {
            self.lr = (self.lr * self.factor).max(self.min_lr);
            self.bad_epochs = 0;
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auprc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; 0 means the initial model.
    pub best_epoch: usize,
    pub steps: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_auprc,lr\n");
        for r in &self.epochs {
            writeln!(s, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_auprc, r.lr).expect("string write");
        }
        s
    }
}

/// Training stopped on a non-finite value.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    /// Parameters before the failing step.
    pub last_good: Box<SupermanModel>,
    pub history: TrainHistory,
}

impl From<TrainAbort> for Error {
    fn from(a: TrainAbort) -> Self {
        a.error
    }
}

/// Mean BCE over `batch` and its gradient with respect to every model
/// parameter. Dropout is active when `rng` is given.
pub fn batch_loss_and_grad(
    model: &SupermanModel,
    batch: &[&GraphSet],
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let mut rng = rng;
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    value_and_grad(&params, |tape, vars| {
        let mut losses = Vec::with_capacity(batch.len());
        for sample in batch {
            let trace = model.forward_tape(tape, vars, sample, reborrow(&mut rng))?;
            losses.push(tape.bce_with_logits(trace.logit, f64::from(sample.label))?);
        }
        let row = if losses.len() == 1 { losses[0] } else { tape.concat_cols(losses)? };
        let total = tape.sum_all(row);
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    })
}

/// Seeded shuffle into train, validation and test parts.
pub fn split_dataset(
    data: &[GraphSet],
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Vec<GraphSet>, Vec<GraphSet>, Vec<GraphSet>)> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::InvalidConfig(format!("split fractions {train_frac}/{val_frac} leave no test data")));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (data.len() as f64 * train_frac).round() as usize;
    let n_val = (data.len() as f64 * val_frac).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= data.len() {
        return Err(Error::InvalidConfig(format!("{} samples are too few to split", data.len())));
    }
    let pick = |r: &[usize]| r.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..n_train + n_val]), pick(&idx[n_train + n_val..])))
}

/// Logits for every sample.
pub fn predict_logits(model: &SupermanModel, data: &[GraphSet]) -> Result<Vec<f64>> {
    data.iter().map(|s| model.forward(s)).collect()
}

pub fn evaluate(model: &SupermanModel, data: &[GraphSet]) -> Result<Metrics> {
    let logits = predict_logits(model, data)?;
    let labels: Vec<u8> = data.iter().map(|s| s.label).collect();
    Metrics::compute(&logits, &labels)
}

/// Step-level driver around a model and its optimiser.
#[derive(Debug)]
pub struct Trainer {
    model: SupermanModel,
    adam: AdamState,
    dropout_rng: ChaCha8Rng,
    steps: usize,
}

impl Trainer {
    pub fn new(model: SupermanModel, lr: f64, weight_decay: f64, seed: u64) -> Self {
        let adam = AdamState::new(&model.params(), lr, weight_decay);
        Self { model, adam, dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15), steps: 0 }
    }

    pub fn model(&self) -> &SupermanModel {
        &self.model
    }

    pub fn into_model(self) -> SupermanModel {
        self.model
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.adam.learning_rate = lr;
    }

    /// One Adam step on `batch`; returns the batch loss before the update.
    pub fn step(&mut self, batch: &[&GraphSet]) -> Result<f64> {
        let (loss, grads) = batch_loss_and_grad(&self.model, batch, Some(&mut self.dropout_rng))?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss {loss} at step {}", self.steps)));
        }
        self.adam.step(self.model.params_mut(), &grads)?;
        self.steps += 1;
        Ok(loss)
    }
}

fn check_disjoint(train: &[GraphSet], val: &[GraphSet]) -> Result<()> {
    let ids: BTreeSet<&str> = train.iter().map(|s| s.entity_id.as_str()).collect();
    if let Some(s) = val.iter().find(|s| ids.contains(s.entity_id.as_str())) {
        return Err(Error::InvalidConfig(format!("entity `{}` is in both train and validation splits", s.entity_id)));
    }
    Ok(())
}

fn better(candidate: (f64, f64), best: (f64, f64)) -> bool {
    let (ca, cl) = (if candidate.0.is_nan() { f64::NEG_INFINITY } else { candidate.0 }, candidate.1);
    let (ba, bl) = (if best.0.is_nan() { f64::NEG_INFINITY } else { best.0 }, best.1);
    ca > ba || (ca == ba && cl < bl)
}

/// Trains for `config.epochs` epochs and returns the parameters with the best
/// validation AUPRC (ties broken by validation loss, then by earlier epoch).
pub fn train(
    model: SupermanModel,
    train_set: &[GraphSet],
    val_set: &[GraphSet],
    config: &TrainConfig,
) -> std::result::Result<(SupermanModel, TrainHistory), TrainAbort> {
    let mut history = TrainHistory::default();
    let fail = |error, model: &SupermanModel, history: &TrainHistory| TrainAbort {
        error,
        last_good: Box::new(model.clone()),
        history: history.clone(),
    };
    let setup = config.validate().and_then(|_| check_disjoint(train_set, val_set)).and_then(|_| {
        if val_set.is_empty() {
            Err(Error::InvalidConfig("empty validation split".into()))
        } else {
            Ok(())
        }
    });
    if let Err(e) = setup {
        return Err(fail(e, &model, &history));
    }
    if config.epochs == 0 {
        return Ok((model, history));
    }
    let labels: Vec<u8> = train_set.iter().map(|s| s.label).collect();
    let mut sampler = match BatchSampler::new(&labels, config.batch_size, config.upsample_minority, config.seed) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, &model, &history)),
    };
    let val_labels: Vec<u8> = val_set.iter().map(|s| s.label).collect();
    let mut scheduler =
        PlateauScheduler::new(config.lr_max, config.plateau_factor, config.plateau_patience, config.lr_min);
    let mut trainer = Trainer::new(model, config.lr_max, config.weight_decay, config.seed);
    let mut best: Option<(SupermanModel, (f64, f64))> = None;

    'epochs: for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in sampler.epoch() {
            if config.max_steps.is_some_and(|m| trainer.steps() >= m) {
                break;
            }
            let refs: Vec<&GraphSet> = batch.iter().map(|&i| &train_set[i]).collect();
            match trainer.step(&refs) {
                Ok(l) => {
                    loss_sum += l;
                    batches += 1;
                }
                Err(e) => {
                    history.steps = trainer.steps();
                    return Err(fail(e, trainer.model(), &history));
                }
            }
        }
        let val = predict_logits(trainer.model(), val_set).and_then(|z| {
            let loss = bce_loss(&z, &val_labels)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("validation loss {loss} at epoch {epoch}")));
            }
            let probs: Vec<f64> = z.iter().map(|&v| crate::diffcore::sigmoid(v)).collect();
            Ok((loss, auprc(&probs, &val_labels).unwrap_or(f64::NAN)))
        });
        let (val_loss, val_auprc) = match val {
            Ok(v) => v,
            Err(e) => return Err(fail(e, trainer.model(), &history)),
        };
        let lr = scheduler.step(val_loss);
        trainer.set_lr(lr);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            val_loss,
            val_auprc,
            lr,
        });
        if best.as_ref().is_none_or(|(_, b)| better((val_auprc, val_loss), *b)) {
            best = Some((trainer.model().clone(), (val_auprc, val_loss)));
            history.best_epoch = epoch;
        }
        if config.max_steps.is_some_and(|m| trainer.steps() >= m) {
            break 'epochs;
        }
    }
    history.steps = trainer.steps();
    let model = best.map(|b| b.0).unwrap_or_else(|| trainer.into_model());
    Ok((model, history))
}
