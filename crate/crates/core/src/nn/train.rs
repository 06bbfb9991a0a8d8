//! Mini-batch training with online affine augmentation and
//! minimum-validation-loss checkpointing.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::adam::{AdamConfig, AdamState};
use super::loss::{softmax_cross_entropy, softmax_rows};
use super::net::{Gradients, LayerStack};
use super::Tensor4;
use crate::augment::{apply_affine, draw_affine, AffinePolicy};
use crate::error::{Error, Result};
use crate::imagecore::{resize_bilinear, GrayImage};
use crate::seed::rng_for;

const ORDER_STREAM: u64 = 0x4f52_4445;

/// An image, its class and a stable identity used to key augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub label: usize,
    pub sample_id: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub policy: AffinePolicy,
    /// Seeds the per-epoch shuffle of training samples.
    pub order_seed: u64,
    /// Seeds the online affine draws.
    pub augment_seed: u64,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<u32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 16,
            optimizer: AdamConfig::default(),
            policy: AffinePolicy::default(),
            order_seed: 0,
            augment_seed: 0,
            patience: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: LayerStack,
    pub epoch: u32,
    pub val_loss: f64,
}

/// Network parameters plus optimizer and early-stopping state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub net: LayerStack,
    pub adam: AdamState,
    pub optimizer: AdamConfig,
    pub epoch: u32,
    pub best: Option<Checkpoint>,
}

impl TrainState {
    pub fn new(net: LayerStack, optimizer: AdamConfig) -> Self {
        let adam = AdamState::new(&net);
        Self {
            net,
            adam,
            optimizer,
            epoch: 0,
            best: None,
        }
    }

    /// Records `val_loss` for the current parameters; the checkpoint moves
    /// only on strict improvement. Returns whether it moved.
    pub fn observe_validation(&mut self, val_loss: f64) -> bool {
        let improved = self.best.as_ref().is_none_or(|b| val_loss < b.val_loss);
        if improved {
            self.best = Some(Checkpoint {
                net: self.net.clone(),
                epoch: self.epoch,
                val_loss,
            });
        }
        improved
    }
}

pub fn adam_step(state: &mut TrainState, grads: &Gradients) -> Result<()> {
    let cfg = state.optimizer;
    state.adam.update(&cfg, &mut state.net, grads)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: u32,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:.8},{:.8},{:.6}",
                r.epoch, r.train_loss, r.val_loss, r.val_accuracy
            );
        }
        s
    }
}

/// Converts images to a `(n, 1, rows, cols)` tensor scaled to [0, 1],
/// resizing to the network input size when needed.
pub fn images_to_tensor(
    images: &[&GrayImage],
    input_dims: (usize, usize, usize),
) -> Result<Tensor4> {
    let (c, h, w) = input_dims;
    if c != 1 {
        return Err(Error::ShapeMismatch(format!(
            "grayscale input needs 1 channel, network has {c}"
        )));
    }
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        let sized;
        let img = if img.dims() == (w, h) {
            *img
        } else {
            sized = resize_bilinear(img, w, h);
            &sized
        };
        data.extend(img.pixels().iter().map(|&p| p as f64 / 255.0));
    }
    Tensor4::from_vec([images.len(), 1, h, w], data)
}

/// Softmax class probabilities for each image.
pub fn predict_proba(
    net: &LayerStack,
    images: &[&GrayImage],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let k = net.num_classes();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let x = images_to_tensor(chunk, net.input_dims())?;
        let (logits, _) = net.forward(&x, false)?;
        out.extend(softmax_rows(&logits).chunks(k).map(|r| r.to_vec()));
    }
    Ok(out)
}

/// Mean cross-entropy and accuracy on a labeled set.
pub fn evaluate(net: &LayerStack, data: &[LabeledImage], batch_size: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptySplit("evaluation set is empty".into()));
    }
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for chunk in data.chunks(batch_size.max(1)) {
        let imgs: Vec<&GrayImage> = chunk.iter().map(|s| &s.image).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let x = images_to_tensor(&imgs, net.input_dims())?;
        let (logits, _) = net.forward(&x, false)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        let probs = softmax_rows(&logits);
        let k = logits.sample_len();
        for (row, &y) in probs.chunks(k).zip(&labels) {
            if argmax(row) == y {
                correct += 1;
            }
        }
    }
    Ok((
        loss_sum / data.len() as f64,
        correct as f64 / data.len() as f64,
    ))
}

pub fn argmax(row: &[f64]) -> usize {
    // First index wins ties.
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains `net` and returns the state holding the minimum-validation-loss
/// parameters (in `state.net`) together with the per-epoch log.
///
/// Online affine augmentation touches only the training samples.
pub fn train(
    net: LayerStack,
    train_set: &[LabeledImage],
    val_set: &[LabeledImage],
    cfg: &TrainConfig,
) -> Result<(TrainState, TrainingLog)> {
    if train_set.is_empty() {
        return Err(Error::EmptySplit("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptySplit("validation set is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidParameter(
            "epochs and batch size must be >= 1".into(),
        ));
    }
    cfg.policy.validate()?;
    let mut state = TrainState::new(net, cfg.optimizer);
    let mut log = TrainingLog::default();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        state.epoch = epoch;
        order.sort_unstable();
        order.shuffle(&mut rng_for(cfg.order_seed, &[ORDER_STREAM, epoch as u64]));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let augmented: Vec<GrayImage> = batch
                .iter()
                .map(|&i| {
                    let s = &train_set[i];
                    apply_affine(
                        &s.image,
                        &draw_affine(&cfg.policy, cfg.augment_seed, s.sample_id, epoch),
                    )
                })
                .collect();
            let refs: Vec<&GrayImage> = augmented.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].label).collect();
            let x = images_to_tensor(&refs, state.net.input_dims())?;
            let (_, tape) = state.net.forward(&x, true)?;
            let (loss, grads) = state.net.backward(&tape, &labels)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite loss or gradient at epoch {epoch}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut state, &grads)?;
        }
        let (val_loss, val_accuracy) = evaluate(&state.net, val_set, cfg.batch_size)?;
        log.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_accuracy,
        });
        if state.observe_validation(val_loss) {
            since_best = 0;
        } else {
            since_best += 1;
        }
        log::debug!(
            "epoch {epoch}: train {:.4} val {val_loss:.4} acc {val_accuracy:.3}",
            loss_sum / train_set.len() as f64
        );
        if cfg.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    let best = state.best.as_ref().expect("at least one epoch ran");
    log.best_epoch = best.epoch;
    state.net = best.net.clone();
    Ok((state, log))
}
