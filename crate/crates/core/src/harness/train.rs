//! Mini-batch training and evaluation.

use std::time::Instant;

use ectwist_nn::loss::{argmax, cross_entropy_with_logits, weighted_bce_with_logits};
use ectwist_nn::{Adam, AdamConfig, Mode, Sequential, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::metrics::{Confusion, MetricsRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Task {
    /// Curve (1) vs random (0), weighted BCE on a single logit.
    Binary { pos_weight: f64 },
    /// `classes`-way softmax cross-entropy.
    Classes { classes: usize },
}

impl Task {
    pub fn classes(self) -> usize {
        match self {
            Task::Binary { .. } => 2,
            Task::Classes { classes } => classes,
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            Task::Binary { .. } => 1,
            Task::Classes { classes } => classes,
        }
    }

    /// Mean loss and its gradient w.r.t. the logits.
    pub fn loss(self, logits: &Tensor<f32>, labels: &[u8]) -> (f64, Tensor<f32>) {
        match self {
            Task::Binary { pos_weight } => {
                let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
                weighted_bce_with_logits(logits, &y, pos_weight)
            }
            Task::Classes { .. } => {
                let c: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
                cross_entropy_with_logits(logits, &c)
            }
        }
    }

    /// Binary: logit >= 0 (sigmoid >= 1/2). Otherwise the argmax.
    pub fn predict(self, logits: &[f32]) -> u8 {
        match self {
            Task::Binary { .. } => u8::from(logits[0] >= 0.0),
            Task::Classes { .. } => argmax(logits) as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub task: Task,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub verbose: bool,
    /// Epochs already completed (when resuming from a checkpoint).
    pub completed_epochs: usize,
}

impl TrainConfig {
    pub fn new(task: Task, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 64,
            adam: AdamConfig::default(),
            task,
            seed,
            verbose: false,
            completed_epochs: 0,
        }
    }
}

/// Batches for one epoch: a seeded shuffle of `indices`. A trailing batch of
/// one sample is dropped, because training-mode batch norm needs two.
pub fn epoch_batches(indices: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order = indices.to_vec();
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(2))
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Logits for `indices` in evaluation mode.
pub fn predict_logits(
    model: &mut Sequential<f32>,
    data: &LabeledDataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let y = model.forward(data.batch(chunk)?, Mode::Eval)?;
        out.extend(y.data.chunks(y.item_len()).map(<[f32]>::to_vec));
    }
    model.clear_cache();
    Ok(out)
}

pub fn evaluate(
    model: &mut Sequential<f32>,
    data: &LabeledDataset,
    indices: &[usize],
    task: Task,
    batch_size: usize,
    epoch: usize,
    split: &str,
) -> Result<MetricsRecord> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut confusion = Confusion::new(task.classes());
    let mut loss_sum = 0.0;
    for chunk in indices.chunks(batch_size.max(1)) {
        let labels: Vec<u8> = chunk.iter().map(|&i| data.labels[i]).collect();
        let y = model.forward(data.batch(chunk)?, Mode::Eval)?;
        loss_sum += task.loss(&y, &labels).0 * chunk.len() as f64;
        for (row, &l) in y.data.chunks(y.item_len()).zip(&labels) {
            confusion.add(l, task.predict(row));
        }
    }
    model.clear_cache();
    Ok(MetricsRecord::from_confusion(
        epoch,
        split,
        loss_sum / indices.len() as f64,
        confusion,
    ))
}

/// Trains up to `config.epochs` epochs, starting after
/// `config.completed_epochs`. After each epoch the training-split record (from
/// the training-mode passes of that epoch) and a test-split evaluation are
/// appended to `records`, then `on_epoch` runs (e.g. to checkpoint). Since
/// shuffles depend only on the seed and epoch, a resumed run matches an
/// uninterrupted one.
#[allow(clippy::too_many_arguments)]
pub fn train_loop(
    model: &mut Sequential<f32>,
    adam: &mut Adam,
    data: &LabeledDataset,
    train: &[usize],
    test: &[usize],
    config: &TrainConfig,
    records: &mut Vec<MetricsRecord>,
    mut on_epoch: impl FnMut(usize, &Sequential<f32>, &Adam, &[MetricsRecord]) -> Result<()>,
) -> Result<()> {
    let task = config.task;
    for epoch in config.completed_epochs + 1..=config.epochs {
        let start = Instant::now();
        let batches = epoch_batches(train, config.batch_size, config.seed, epoch);
        let mut confusion = Confusion::new(task.classes());
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let labels: Vec<u8> = batch.iter().map(|&i| data.labels[i]).collect();
            let y = model.forward(data.batch(batch)?, Mode::Train)?;
            let (loss, grad) = task.loss(&y, &labels);
            if !loss.is_finite() {
                return Err(Error::Nn(ectwist_nn::NnError::NonFinite {
                    what: "loss",
                    index: b,
                    value: loss,
                }));
            }
            for (row, &l) in y.data.chunks(y.item_len()).zip(&labels) {
                confusion.add(l, task.predict(row));
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            model.zero_grad();
            model.backward(grad, false)?;
            adam.step(model.params_mut())?;
            if config.verbose && (b + 1) % 50 == 0 {
                eprintln!(
                    "  epoch {epoch} batch {}/{} loss {:.4} ({:.0}s)",
                    b + 1,
                    batches.len(),
                    loss_sum / seen as f64,
                    start.elapsed().as_secs_f64()
                );
            }
        }
        model.clear_cache();
        records.push(MetricsRecord::from_confusion(
            epoch,
            "train",
            loss_sum / seen.max(1) as f64,
            confusion,
        ));
        if !test.is_empty() {
            records.push(evaluate(model, data, test, task, config.batch_size, epoch, "test")?);
        }
        if config.verbose {
            let last = records.last().expect("just pushed");
            eprintln!(
                "epoch {epoch}: {} loss {:.4} f1 {:.4} acc {:.4} ({:.0}s)",
                last.split,
                last.loss,
                last.f1,
                last.accuracy,
                start.elapsed().as_secs_f64()
            );
        }
        on_epoch(epoch, model, adam, records)?;
    }
    Ok(())
}
