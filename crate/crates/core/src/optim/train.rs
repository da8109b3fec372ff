//! The deterministic training loop.
//!
//! All randomness is derived from `(seed, epoch)` streams, so a run is fully
//! determined by its seed, config, and data — and a run resumed from a
//! checkpoint at epoch `k` produces exactly the epoch lines the
//! uninterrupted run would have produced from `k + 1` onward.

use crate::arch::{bind_params, graph_forward, ArchGraph, ParamStore};
use crate::data::{
    augment, rebalanced_batches, round_batch_size, AugmentationConfig, ClassLabel, Dataset,
};
use crate::error::{Error, Result};
use crate::optim::adam::{adam_step, AdamState};
use crate::optim::schedule::PlateauSchedule;
use crate::rng::{stream_rng, stream_seed};
use crate::tensor::{cross_entropy, Tape, Tensor};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Which validation signal the plateau policy watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauMetric {
    ValLoss,
    ValAccuracy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Rounded down to a multiple of three before batching.
    pub batch_size: usize,
    pub seed: u64,
    /// Patient-level fraction of the training set carved off for
    /// validation.
    pub val_fraction: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub monitor: PlateauMetric,
    pub augment: Option<AugmentationConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            epochs: 22,
            batch_size: 64,
            seed: 0,
            val_fraction: 0.1,
            factor: 0.7,
            patience: 5,
            min_lr: 0.0,
            monitor: PlateauMetric::ValLoss,
            augment: Some(AugmentationConfig::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidSpec(format!("learning rate {} invalid", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidSpec("epochs must be positive".into()));
        }
        if round_batch_size(self.batch_size) == 0 {
            return Err(Error::InvalidSpec(format!(
                "batch size {} rounds down to zero",
                self.batch_size
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "val_fraction {} outside (0, 1)",
                self.val_fraction
            )));
        }
        if let Some(aug) = &self.augment {
            aug.validate()?;
        }
        PlateauSchedule::new(self.factor, self.patience, self.min_lr).map(|_| ())
    }
}

/// One line of the training log, in fixed field order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochRecord {
    /// Canonical log line: `epoch lr train_loss val_loss val_acc`, floats
    /// printed with enough digits to round-trip exactly.
    pub fn log_line(&self) -> String {
        format!(
            "{} {:.16e} {:.16e} {:.16e} {:.16e}",
            self.epoch, self.lr, self.train_loss, self.val_loss, self.val_acc
        )
    }
}

/// Everything needed to continue training where a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    pub opt: AdamState,
    pub sched: PlateauSchedule,
    pub completed_epochs: usize,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub state: TrainState,
    /// Epoch with the lowest validation loss seen during *this* run, and a
    /// copy of its parameters.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_params: ParamStore,
}

/// Observer view of one finished epoch.
pub struct EpochSnapshot<'a> {
    pub params: &'a ParamStore,
    pub opt: &'a AdamState,
    pub sched: &'a PlateauSchedule,
    pub epoch: usize,
    pub is_best: bool,
}

/// Trains `graph` on `dataset`, optionally resuming from a prior state.
///
/// `on_epoch` runs after every epoch with the fresh record and state (for
/// logging and checkpointing); an error from it aborts the run.
pub fn train(
    graph: &ArchGraph,
    dataset: &Dataset,
    config: &TrainConfig,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&EpochRecord, &EpochSnapshot<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    graph.validate()?;
    let classes = graph.output_classes()?;
    if classes != ClassLabel::COUNT {
        return Err(Error::InvalidGraph(format!(
            "graph produces {classes} classes, dataset has {}",
            ClassLabel::COUNT
        )));
    }
    let batch_size = round_batch_size(config.batch_size);
    let (train_idx, val_idx) = dataset.carve_validation(config.val_fraction, config.seed)?;
    let train_labels: Vec<ClassLabel> = train_idx.iter().map(|&i| dataset.labels[i]).collect();

    let (mut params, mut opt, mut sched, start_epoch) = match resume {
        Some(state) => {
            if state.completed_epochs >= config.epochs {
                return Err(Error::InvalidSpec(format!(
                    "resume state already covers {} of {} epochs",
                    state.completed_epochs, config.epochs
                )));
            }
            (state.params, state.opt, state.sched, state.completed_epochs)
        }
        None => {
            let params = ParamStore::init(graph, config.seed)?;
            let opt = AdamState::new(&params, config.lr);
            let sched = PlateauSchedule::new(config.factor, config.patience, config.min_lr)?;
            (params, opt, sched, 0)
        }
    };

    let mut log = Vec::new();
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();

    for epoch in (start_epoch + 1)..=config.epochs {
        let lr_used = opt.lr;
        let batches = rebalanced_batches(
            &train_labels,
            batch_size,
            stream_seed(config.seed, "batches", epoch as u64),
        )?;
        let mut aug_rng = config
            .augment
            .as_ref()
            .map(|a| stream_rng(config.seed ^ a.seed, "augment", epoch as u64));

        let mut loss_sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let mut labels = Vec::with_capacity(batch.len());
            let mut images = Vec::with_capacity(batch.len());
            for &local in batch {
                let global = train_idx[local];
                labels.push(dataset.labels[global].index());
                let img = match (&config.augment, &mut aug_rng) {
                    (Some(aug), Some(rng)) => augment(&dataset.images[global], aug, rng)?,
                    _ => dataset.images[global].clone(),
                };
                images.push(img);
            }
            let input = stack_images(&images)?;

            let mut tape = Tape::new();
            let binding = bind_params(&mut tape, &params, true);
            let x = tape.leaf(input);
            let probs = graph_forward(graph, &params, &binding, &mut tape, x)?;
            let loss = tape.cross_entropy(probs, &labels)?;
            let loss_val = tape.value(loss).data()[0];
            if !loss_val.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss diverged at epoch {epoch}, batch {bi}"
                )));
            }
            let mut grads = tape.backward(loss)?;
            let grad_tensors: Vec<Tensor> = (0..params.len())
                .map(|i| grads.take(binding.value(i)).expect("trainable param"))
                .collect();
            adam_step(&mut params, &grad_tensors, &mut opt).map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("epoch {epoch}, batch {bi}: {msg}"))
                }
                other => other,
            })?;
            loss_sum += loss_val;
        }
        let train_loss = loss_sum / batches.len() as f64;

        let (val_loss, val_acc) = evaluate_subset(graph, &params, dataset, &val_idx)?;
        let metric = match config.monitor {
            PlateauMetric::ValLoss => val_loss,
            PlateauMetric::ValAccuracy => -val_acc,
        };
        opt.lr = sched.update(opt.lr, metric);

        let record = EpochRecord {
            epoch,
            lr: lr_used,
            train_loss,
            val_loss,
            val_acc,
        };
        let is_best = val_loss < best_val_loss;
        if is_best {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best_params = params.clone();
        }
        let snapshot = EpochSnapshot {
            params: &params,
            opt: &opt,
            sched: &sched,
            epoch,
            is_best,
        };
        on_epoch(&record, &snapshot)?;
        log.push(record);
    }

    Ok(TrainOutcome {
        log,
        state: TrainState {
            params,
            opt,
            sched,
            completed_epochs: config.epochs,
        },
        best_epoch,
        best_val_loss,
        best_params,
    })
}

/// Stacks `[H, W]` images into an `[N, 1, H, W]` batch.
pub fn stack_images(images: &[Tensor]) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::InvalidData("empty image batch".into()));
    }
    let (h, w) = (images[0].shape()[0], images[0].shape()[1]);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        img.expect_rank(2, "batch image")?;
        if img.shape() != [h, w] {
            return Err(Error::ShapeMismatch(format!(
                "image shape {:?} in a batch of {h}x{w}",
                img.shape()
            )));
        }
        data.extend_from_slice(img.data());
    }
    Tensor::new(alloc::vec![images.len(), 1, h, w], data)
}

/// Mean cross-entropy and argmax accuracy over the given dataset indices,
/// running the graph in inference mode in bounded chunks.
pub fn evaluate_subset(
    graph: &ArchGraph,
    params: &ParamStore,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(Error::InvalidData("empty evaluation subset".into()));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(64) {
        let images: Vec<Tensor> = chunk.iter().map(|&i| dataset.images[i].clone()).collect();
        let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels[i].index()).collect();
        let input = stack_images(&images)?;
        let probs = crate::arch::infer(graph, params, &input)?;
        let loss = cross_entropy(&probs, &labels)?;
        loss_sum += loss.data()[0] * chunk.len() as f64;
        let k = probs.shape()[1];
        for (row, &label) in labels.iter().enumerate() {
            let scores = &probs.data()[row * k..(row + 1) * k];
            let pred = argmax(scores);
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok((
        loss_sum / indices.len() as f64,
        correct as f64 / indices.len() as f64,
    ))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in scores.iter().enumerate().skip(1) {
        if *v > scores[best] {
            best = i;
        }
    }
    best
}
