//! Mini-batch training with Adam, augmentation, and early stopping.

use super::adam::{AdamConfig, AdamState};
use super::augment::{augment, AugmentConfig};
use super::loss::cross_entropy;
use super::{backward_pass, forward_pass, ModelSpec, ParamStore};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{argmax, Tensor};
use rand::seq::SliceRandom;
use std::io::Write;
use std::path::Path;

/// One training example: a preprocessed input volume and its class index.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation loss.
    pub early_stop_patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augmentation: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 20,
            early_stop_patience: 5,
            learning_rate: 0.001,
            seed: 0,
            augmentation: AugmentConfig::default(),
        }
    }
}

/// Metrics recorded at the end of each epoch, inference mode, no augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Mean cross-entropy and accuracy of the model over `data`, inference mode.
pub fn evaluate_model(
    spec: &ModelSpec,
    params: &ParamStore,
    data: &[Sample],
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for sample in data {
        let (probs, _) = forward_pass(spec, params, &sample.input, false, None)?;
        let row = probs.reshape(vec![1, probs.len()])?;
        loss_sum += cross_entropy(&row, &[sample.label])?.loss;
        if argmax(probs.data()) == sample.label {
            correct += 1;
        }
    }
    Ok((loss_sum / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Trains `params` and returns the weights from the best validation epoch
/// together with the per-epoch history.
///
/// Each epoch draws shuffling, augmentation, and dropout from a stream keyed
/// by (seed, epoch), so results depend only on the config and the data.
pub fn fit(
    spec: &ModelSpec,
    params: ParamStore,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<(ParamStore, Vec<EpochStats>)> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || cfg.early_stop_patience == 0 {
        return Err(Error::InvalidArg(
            "batch_size, max_epochs, early_stop_patience must be positive".into(),
        ));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(Error::InvalidArg(format!(
            "learning rate {} must be finite and non-negative",
            cfg.learning_rate
        )));
    }
    for (i, s) in train.iter().chain(val).enumerate() {
        if s.label >= spec.num_classes {
            return Err(Error::InvalidArg(format!(
                "sample {i}: label {} out of range for {} classes",
                s.label, spec.num_classes
            )));
        }
    }

    let mut params = params;
    let mut adam = AdamState::new(AdamConfig::with_alpha(cfg.learning_rate), &params);
    let mut best_params = params.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut history = Vec::new();

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut epoch_rng = rng::stream_rng(cfg.seed, rng::STREAM_EPOCH, epoch as u64);
        order.shuffle(&mut epoch_rng);

        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = params.zeros_like();
            for &idx in batch {
                let sample = &train[idx];
                let input = if cfg.augmentation.is_identity() {
                    sample.input.clone()
                } else {
                    augment(&sample.input, &cfg.augmentation, &mut epoch_rng)
                };
                let (probs, caches) =
                    forward_pass(spec, &params, &input, true, Some(&mut epoch_rng))?;
                let row = probs.reshape(vec![1, probs.len()])?;
                let out = cross_entropy(&row, &[sample.label])?;
                // fold the batch averaging into the per-sample logit gradient
                let g = Tensor::new(
                    vec![probs.len()],
                    out.grad_logits.data().iter().map(|v| v * scale).collect(),
                )?;
                grads.add_assign(&backward_pass(spec, &params, &caches, &g)?)?;
            }
            adam.step(&mut params, &grads)?;
        }

        let (train_loss, train_acc) = evaluate_model(spec, &params, train)?;
        let (val_loss, val_acc) = evaluate_model(spec, &params, val)?;
        history.push(EpochStats { epoch, train_loss, train_acc, val_loss, val_acc });

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok((best_params, history))
}

/// Writes the epoch history as CSV with a fixed header.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut buf = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for h in history {
        buf.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch, h.train_loss, h.train_acc, h.val_loss, h.val_acc
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}
