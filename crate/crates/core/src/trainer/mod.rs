//! Two-phase fine-tuning schedule.
//!
//! Phase 1 trains only the head with the whole backbone frozen. Phase 2
//! additionally unfreezes the first `unfreeze_first_n` backbone layers. One
//! [`MetricsRecord`] is produced per epoch.

mod checkpoint;
mod curves;
mod metrics;

pub use checkpoint::{
    decode_sequential, encode_sequential, load_checkpoint, load_checkpoint_into, load_sequential,
    save_checkpoint, save_sequential,
    CheckpointError, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use curves::{emit_curves, render_curves};
pub use metrics::{read_metrics, write_metrics, MetricsRecord};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{augment_batch, rescale, AugmentationConfig};
use crate::dataset::{
    load_image, resize_to_square, DatasetError, DatasetManifest, Image, LabeledSample, Split,
    ValueDomain,
};
use crate::model::{ModelError, ModelGraph};
use crate::nn::{softmax_cross_entropy, Mode, NnError, Tensor};
use crate::rng::{substream, Stream};

pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_PHASE1_EPOCHS: usize = 70;
pub const DEFAULT_PHASE2_EPOCHS: usize = 40;
pub const DEFAULT_UNFREEZE_FIRST_N: usize = 5;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("numeric divergence: non-finite loss in phase {phase}, epoch {epoch}")]
    Divergence { phase: u8, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Model(ModelError::Nn(e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub unfreeze_first_n: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            phase1_epochs: DEFAULT_PHASE1_EPOCHS,
            phase2_epochs: DEFAULT_PHASE2_EPOCHS,
            unfreeze_first_n: DEFAULT_UNFREEZE_FIRST_N,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: crate::rng::DEFAULT_SEED,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.phase1_epochs + self.phase2_epochs
    }

    pub fn validate(&self, model: &ModelGraph) -> Result<(), TrainError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(TrainError::Config(format!(
                "batch size must be ≥ 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        if self.unfreeze_first_n > model.backbone_len {
            return Err(TrainError::Config(format!(
                "cannot unfreeze {} layers of a {}-layer backbone",
                self.unfreeze_first_n, model.backbone_len
            )));
        }
        self.augmentation.validate().map_err(TrainError::Config)
    }
}

/// A byte-domain image already warped to the model's input side.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub train: Vec<LabeledImage>,
    pub val: Vec<LabeledImage>,
}

/// Stacks images into an N×C×H×W tensor.
pub fn images_to_tensor(images: &[Image]) -> Result<Tensor, NnError> {
    let first = images
        .first()
        .ok_or_else(|| NnError::Dimension("empty image batch".into()))?;
    let (h, w, c) = first.shape();
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        if img.shape() != (h, w, c) {
            return Err(NnError::Dimension(format!(
                "mixed image shapes in batch: {:?} vs {:?}",
                img.shape(),
                (h, w, c)
            )));
        }
        data.extend(img.to_planar());
    }
    Tensor::new(&[images.len(), c, h, w], data)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn eval_input(img: &Image) -> Image {
    match img.domain {
        ValueDomain::Byte => rescale(img, 1.0 / 255.0),
        ValueDomain::Unit => img.clone(),
    }
}

/// Accuracy and mean cross-entropy in inference mode.
pub fn evaluate(
    model: &mut ModelGraph,
    samples: &[LabeledImage],
    batch_size: usize,
) -> Result<(f64, f64), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Data("cannot evaluate an empty split".into()));
    }
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let images: Vec<Image> = chunk.iter().map(|s| eval_input(&s.image)).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let logits = model.forward(&images_to_tensor(&images)?, Mode::Infer)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        correct += (0..chunk.len())
            .filter(|&i| argmax(logits.row(i)) == labels[i])
            .count();
    }
    let n = samples.len() as f64;
    Ok((correct as f64 / n, loss_sum / n))
}

/// Batch boundaries over `n` samples. A trailing batch of one is folded into
/// its predecessor, since train-mode batch normalization needs two samples.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut ranges: Vec<_> = (0..n)
        .step_by(batch_size.max(1))
        .map(|s| s..(s + batch_size).min(n))
        .collect();
    if ranges.len() > 1 && ranges.last().is_some_and(|r| r.len() == 1) {
        let last = ranges.pop().expect("nonempty");
        ranges.last_mut().expect("nonempty").end = last.end;
    }
    ranges
}

/// One pass over the training split with the model's current trainable
/// flags. `epoch_index` keys the shuffle and augmentation streams. Returns
/// the sample-weighted mean train-mode loss and accuracy.
pub fn train_epoch(
    model: &mut ModelGraph,
    train: &[LabeledImage],
    config: &TrainConfig,
    epoch_index: u64,
) -> Result<(f64, f64), TrainError> {
    if train.len() < 2 {
        return Err(TrainError::Data(format!(
            "training split has {} samples, at least 2 are required",
            train.len()
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut substream(config.seed, Stream::Shuffle, epoch_index));
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for range in batch_ranges(order.len(), config.batch_size) {
        let idx = &order[range.clone()];
        let raw: Vec<Image> = idx.iter().map(|&i| train[i].image.clone()).collect();
        let offset = epoch_index * train.len() as u64 + range.start as u64;
        let images = augment_batch(&raw, &config.augmentation, config.seed, offset);
        let labels: Vec<usize> = idx.iter().map(|&i| train[i].label).collect();
        let logits = model.forward(&images_to_tensor(&images)?, Mode::Train)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
        if !loss.is_finite() {
            model.net.clear_caches();
            return Ok((f64::NAN, 0.0));
        }
        model.net.zero_grad();
        model.backward(&dlogits)?;
        model.net.sgd_step(config.lr)?;
        loss_sum += loss * idx.len() as f64;
        correct += (0..idx.len())
            .filter(|&i| argmax(logits.row(i)) == labels[i])
            .count();
    }
    let n = train.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

fn run_phase(
    model: &mut ModelGraph,
    data: &TrainData,
    config: &TrainConfig,
    phase: u8,
    epochs: usize,
    first_epoch_index: u64,
    history: &mut Vec<MetricsRecord>,
) -> Result<(), TrainError> {
    for epoch in 1..=epochs {
        let (train_loss, train_acc) =
            train_epoch(model, &data.train, config, first_epoch_index + epoch as u64 - 1)?;
        if !train_loss.is_finite() {
            return Err(TrainError::Divergence { phase, epoch });
        }
        let (val_acc, val_loss) = evaluate(model, &data.val, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Divergence { phase, epoch });
        }
        let record = MetricsRecord::new(phase, epoch, train_loss, train_acc, val_loss, val_acc);
        log::info!(
            "phase {phase} epoch {epoch}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc
        );
        history.push(record);
    }
    Ok(())
}

/// Runs both phases and returns one record per epoch.
pub fn train_two_phase(
    model: &mut ModelGraph,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<Vec<MetricsRecord>, TrainError> {
    config.validate(model)?;
    if data.train.is_empty() {
        return Err(TrainError::Data("training split is empty".into()));
    }
    if data.val.is_empty() {
        return Err(TrainError::Data("validation split is empty".into()));
    }
    let mut history = Vec::with_capacity(config.total_epochs());

    model.set_trainable(model.backbone_range(), false)?;
    model.set_trainable(model.head_range(), true)?;
    run_phase(model, data, config, 1, config.phase1_epochs, 0, &mut history)?;

    model.set_trainable(0..config.unfreeze_first_n, true)?;
    run_phase(
        model,
        data,
        config,
        2,
        config.phase2_epochs,
        config.phase1_epochs as u64,
        &mut history,
    )?;
    Ok(history)
}

/// Loads and warps every sample of `split` (all rows when `None`) in
/// manifest order.
pub fn load_split(
    manifest: &DatasetManifest,
    split: Option<Split>,
    side: usize,
) -> Result<Vec<LabeledImage>, DatasetError> {
    let rows: Vec<&LabeledSample> = manifest
        .samples
        .iter()
        .filter(|s| split.is_none() || s.split == split)
        .collect();
    rows.par_iter()
        .map(|s| {
            let img = load_image(&manifest.resolve(s))?;
            Ok(LabeledImage {
                image: resize_to_square(&img, side)?,
                label: s.label.id(),
            })
        })
        .collect()
}
