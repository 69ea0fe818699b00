//! Feature extraction: raw per-epoch training history into the fixed-size
//! normalized windows the controller consumes.
//!
//! Three channels are used, in order: training loss, validation loss, and
//! learning rate. Losses are z-scored over the window, LR is divided by the
//! window's first value, short windows are left-padded with zeros after
//! normalization, and every channel is resized to [`WINDOW_LEN`] by
//! nearest-index sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length every feature channel is resized to.
pub const WINDOW_LEN: usize = 300;

/// Number of feature channels (train loss, val loss, lr).
pub const CHANNELS: usize = 3;

/// One completed trainee epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch_index: usize,
    /// Mean of per-step losses within the epoch.
    pub train_loss: f64,
    /// End-of-epoch validation loss.
    pub val_loss: f64,
    /// LR in force during the epoch.
    pub lr: f64,
}

impl HistoryRecord {
    fn validate(&self) -> Result<()> {
        if !self.train_loss.is_finite() || !self.val_loss.is_finite() {
            return Err(Error::data(format!(
                "non-finite loss at epoch {}",
                self.epoch_index
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::data(format!(
                "lr must be positive and finite at epoch {}",
                self.epoch_index
            )));
        }
        Ok(())
    }
}

/// The 3x300 normalized input consumed by the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
}

impl FeatureWindow {
    /// Channels in declared order: train loss, val loss, lr.
    pub fn channels(&self) -> [&[f64]; CHANNELS] {
        [&self.train_loss, &self.val_loss, &self.lr]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ch) in [
            ("train_loss", &self.train_loss),
            ("val_loss", &self.val_loss),
            ("lr", &self.lr),
        ] {
            if ch.len() != WINDOW_LEN {
                return Err(Error::data(format!(
                    "channel {name} has length {}, expected {WINDOW_LEN}",
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("channel {name} has non-finite values")));
            }
        }
        Ok(())
    }
}

/// Z-score a series using the population standard deviation.
///
/// A constant series (zero deviation) maps to all zeros: it carries no shape
/// information and dividing by zero would poison the window.
pub fn zscore(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::usage("zscore: empty series"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("zscore: non-finite value in series"));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Ok(vec![0.0; series.len()]);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        // Deviations too small to register in f64; treat as constant.
        return Ok(vec![0.0; series.len()]);
    }
    Ok(series.iter().map(|v| (v - mean) / sd).collect())
}

/// Divide a positive series by its first value. The first output is exactly 1.
pub fn normalize_lr(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::usage("normalize_lr: empty series"));
    }
    let first = series[0];
    if !(first > 0.0) || !first.is_finite() {
        return Err(Error::data(format!(
            "normalize_lr: first value must be positive and finite, got {first}"
        )));
    }
    Ok(series.iter().map(|v| v / first).collect())
}

/// Resize by nearest-index sampling: output index `i` reads input index
/// `floor((i + 0.5) * len / target_len)`, clamped to the valid range.
/// Every output value is therefore one of the input values, and the mapping
/// is the identity when lengths already match.
pub fn resize_nearest(series: &[f64], target_len: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::usage("resize_nearest: empty series"));
    }
    if target_len == 0 {
        return Err(Error::usage("resize_nearest: target length must be positive"));
    }
    let len = series.len();
    let scale = len as f64 / target_len as f64;
    Ok((0..target_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale).floor() as usize;
            series[src.min(len - 1)]
        })
        .collect())
}

/// Build the controller input from training history.
///
/// Selects the most recent `min(3n, current_epoch)` epochs, z-scores the two
/// loss channels over that slice, LR-normalizes the lr channel over it,
/// left-pads each normalized channel with zeros up to logical length `3n`,
/// and resizes every channel to [`WINDOW_LEN`].
///
/// `history` must contain one record per completed epoch, in epoch order,
/// covering at least `current_epoch` epochs.
pub fn build_feature_window(
    history: &[HistoryRecord],
    n: usize,
    current_epoch: usize,
) -> Result<FeatureWindow> {
    if n == 0 {
        return Err(Error::usage("build_feature_window: n must be positive"));
    }
    if current_epoch < n {
        return Err(Error::usage(format!(
            "build_feature_window: need at least n={n} epochs, have {current_epoch}"
        )));
    }
    if history.len() < current_epoch {
        return Err(Error::usage(format!(
            "build_feature_window: history has {} records, expected at least {current_epoch}",
            history.len()
        )));
    }
    let seen = &history[..current_epoch];
    for pair in seen.windows(2) {
        if pair[1].epoch_index <= pair[0].epoch_index {
            return Err(Error::data("history epoch indices must be strictly increasing"));
        }
    }
    for rec in seen {
        rec.validate()?;
    }

    let logical = 3 * n;
    let take = logical.min(current_epoch);
    let slice = &seen[current_epoch - take..];

    let train: Vec<f64> = slice.iter().map(|r| r.train_loss).collect();
    let val: Vec<f64> = slice.iter().map(|r| r.val_loss).collect();
    let lr: Vec<f64> = slice.iter().map(|r| r.lr).collect();

    let pad = logical - take;
    let padded = |mut ch: Vec<f64>| -> Vec<f64> {
        if pad > 0 {
            let mut out = vec![0.0; pad];
            out.append(&mut ch);
            out
        } else {
            ch
        }
    };

    let window = FeatureWindow {
        train_loss: resize_nearest(&padded(zscore(&train)?), WINDOW_LEN)?,
        val_loss: resize_nearest(&padded(zscore(&val)?), WINDOW_LEN)?,
        lr: resize_nearest(&padded(normalize_lr(&lr)?), WINDOW_LEN)?,
    };
    window.validate()?;
    Ok(window)
}
