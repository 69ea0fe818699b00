//! Supervised training of the controller with best-model selection by
//! weighted accuracy on a held-out split.

use rand::prelude::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::decision::LrDecision;
use crate::error::{Error, Result};
use crate::net::{
    adam_step, loss_and_grad, predict, weighted_accuracy, AdamState, Architecture,
    ConfusionMatrix, ControllerWeights, RewardPenaltyMatrix,
};
use crate::seeds::derive;
use crate::signal::FeatureWindow;

/// Training hyperparameters. Defaults: Adam at 1e-4 with beta1 0.9 and
/// beta2 0.999, batch size 128, 300 epochs, 70/30 train/validation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub split: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 300,
            split: 0.7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::usage(format!("split must be in (0, 1), got {}", self.split)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::usage("lr must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::usage("batch_size and epochs must be positive"));
        }
        Ok(())
    }
}

/// One point of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_wacc: f64,
}

/// Result of a training run: the best weights by validation weighted
/// accuracy plus the full training curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ControllerWeights,
    pub best_epoch: usize,
    pub best_wacc: f64,
    pub curve: Vec<EpochPoint>,
    pub train_count: usize,
    pub val_count: usize,
}

/// Deterministic sample-level split: shuffle by seed, first
/// `round(split * count)` indices train, the rest validate. Both sides are
/// always non-empty for `count >= 2`.
pub fn split_indices(count: usize, split: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[11]));
    indices.shuffle(&mut rng);
    let n_train = ((count as f64 * split).round() as usize).clamp(1, count.saturating_sub(1).max(1));
    let val = indices.split_off(n_train.min(count));
    (indices, val)
}

/// Confusion matrix and weighted accuracy of `weights` over the samples at
/// `idx`.
pub fn evaluate_subset(
    weights: &ControllerWeights,
    samples: &[Sample],
    idx: &[usize],
) -> Result<(ConfusionMatrix, f64)> {
    if idx.is_empty() {
        return Err(Error::usage("evaluate: empty sample set"));
    }
    let rpm = RewardPenaltyMatrix::default();
    let mut cm = ConfusionMatrix::new();
    for &i in idx {
        let pred = predict(weights, &samples[i].window)?;
        cm.record(pred, samples[i].label);
    }
    let wacc = weighted_accuracy(&cm, &rpm)?;
    Ok((cm, wacc))
}

/// Evaluate over every sample.
pub fn evaluate_dataset(
    weights: &ControllerWeights,
    samples: &[Sample],
) -> Result<(ConfusionMatrix, f64)> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    evaluate_subset(weights, samples, &idx)
}

/// Train the controller on a labeled dataset.
///
/// Splits sample-level by seed, runs mini-batch Adam for `config.epochs`
/// epochs, evaluates weighted accuracy on the validation split after every
/// epoch, and returns the weights of the best epoch (ties go to the earliest
/// epoch). Fully deterministic for a fixed (dataset order, config, seed).
pub fn train_controller(dataset: &[Sample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::data("training needs at least 2 samples"));
    }
    let mut class_counts = [0usize; 3];
    for s in dataset {
        class_counts[s.label.index()] += 1;
    }
    for (k, &count) in class_counts.iter().enumerate() {
        let class = LrDecision::from_index(k).unwrap();
        if count == 0 {
            return Err(Error::data(format!("class '{class}' is absent from the dataset")));
        }
        if count < 10 {
            log::warn!("class '{class}' has only {count} samples");
        }
    }

    let (train_idx, val_idx) = split_indices(dataset.len(), config.split, config.seed);
    log::info!(
        "training on {} samples, validating on {} (classes {:?})",
        train_idx.len(),
        val_idx.len(),
        class_counts
    );

    let mut weights = ControllerWeights::init(Architecture::default(), derive(config.seed, &[12]))?;
    let mut adam = AdamState::new(weights.param_count());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, &[13]));

    let mut order = train_idx.clone();
    let mut best: Option<(ControllerWeights, usize, f64)> = None;
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<FeatureWindow> =
                chunk.iter().map(|&i| dataset[i].window.clone()).collect();
            let labels: Vec<LrDecision> = chunk.iter().map(|&i| dataset[i].label).collect();
            let (loss, grads) = loss_and_grad(&weights, &batch, &labels)?;
            adam_step(&mut weights, &grads, &mut adam, config)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;

        let (_, val_wacc) = evaluate_subset(&weights, dataset, &val_idx)?;
        curve.push(EpochPoint { epoch, train_loss, val_wacc });
        if best.as_ref().map_or(true, |(_, _, b)| val_wacc > *b) {
            best = Some((weights.clone(), epoch, val_wacc));
        }
        log::info!("epoch {epoch}: train_loss {train_loss:.4} val_wacc {val_wacc:.4}");
    }

    let (weights, best_epoch, best_wacc) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        weights,
        best_epoch,
        best_wacc,
        curve,
        train_count: train_idx.len(),
        val_count: val_idx.len(),
    })
}
