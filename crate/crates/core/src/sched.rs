//! LR schedules: constant baseline, one-cycle cosine decay, cyclic cosine
//! decay with period multiplication, exponential decay, and the
//! controller-driven schedule with evenly spaced invocations.

use serde::{Deserialize, Serialize};

use crate::decision::LrDecision;
use crate::error::{Error, Result};
use crate::net::{predict, ControllerWeights};
use crate::signal::{build_feature_window, HistoryRecord};

/// Fully instantiated schedule parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerConfig {
    /// Baseline: LR held constant.
    Constant { lr0: f64 },
    /// One decaying cosine half-cycle over `horizon_t` epochs, then flat at
    /// `lr_min`.
    CosineDecay { lr_max: f64, lr_min: f64, horizon_t: usize },
    /// Cosine cycles restarting at `lr_max`; cycle c has length
    /// `t0 * t_mult^c`.
    CyclicCosine { lr_max: f64, lr_min: f64, t0: usize, t_mult: usize },
    /// `lr0 * gamma^epoch`.
    ExponentialDecay { lr0: f64, gamma: f64 },
    /// Controller-driven: starts at lr0 and compounds one decision factor at
    /// each invocation.
    ArcControlled { lr0: f64, invocations: usize, weights_ref: String },
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::usage(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            SchedulerConfig::Constant { lr0 } => positive("lr0", *lr0),
            SchedulerConfig::CosineDecay { lr_max, lr_min, horizon_t } => {
                positive("lr_max", *lr_max)?;
                if *lr_min < 0.0 || lr_min > lr_max {
                    return Err(Error::usage("need 0 <= lr_min <= lr_max"));
                }
                if *horizon_t == 0 {
                    return Err(Error::usage("horizon_t must be positive"));
                }
                Ok(())
            }
            SchedulerConfig::CyclicCosine { lr_max, lr_min, t0, t_mult } => {
                positive("lr_max", *lr_max)?;
                if *lr_min < 0.0 || lr_min > lr_max {
                    return Err(Error::usage("need 0 <= lr_min <= lr_max"));
                }
                if *t0 == 0 || *t_mult == 0 {
                    return Err(Error::usage("need t0 >= 1 and t_mult >= 1"));
                }
                Ok(())
            }
            SchedulerConfig::ExponentialDecay { lr0, gamma } => {
                positive("lr0", *lr0)?;
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(Error::usage(format!("gamma must be in (0, 1], got {gamma}")));
                }
                Ok(())
            }
            SchedulerConfig::ArcControlled { lr0, invocations, .. } => {
                positive("lr0", *lr0)?;
                if *invocations == 0 {
                    return Err(Error::usage("invocations must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Short label used in reports and plots.
    pub fn label(&self) -> &'static str {
        match self {
            SchedulerConfig::Constant { .. } => "blr",
            SchedulerConfig::CosineDecay { .. } => "cd",
            SchedulerConfig::CyclicCosine { .. } => "ccd",
            SchedulerConfig::ExponentialDecay { .. } => "ed",
            SchedulerConfig::ArcControlled { .. } => "arc",
        }
    }

    pub fn is_controller_driven(&self) -> bool {
        matches!(self, SchedulerConfig::ArcControlled { .. })
    }

    pub fn initial_lr(&self) -> f64 {
        match self {
            SchedulerConfig::Constant { lr0 } => *lr0,
            SchedulerConfig::CosineDecay { lr_max, .. } => *lr_max,
            SchedulerConfig::CyclicCosine { lr_max, .. } => *lr_max,
            SchedulerConfig::ExponentialDecay { lr0, .. } => *lr0,
            SchedulerConfig::ArcControlled { lr0, .. } => *lr0,
        }
    }
}

fn half_cosine(lr_max: f64, lr_min: f64, t: f64, period: f64) -> f64 {
    lr_min + (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t / period).cos()) / 2.0
}

/// LR of a static schedule at `epoch`, pure in (config, epoch).
///
/// The controller-driven schedule is stateful (decisions compound at
/// runtime) and is rejected here; drive it with [`arc_step`].
pub fn lr_at(config: &SchedulerConfig, epoch: usize, horizon: usize) -> Result<f64> {
    config.validate()?;
    if epoch >= horizon {
        return Err(Error::usage(format!(
            "epoch {epoch} out of range for horizon {horizon}"
        )));
    }
    match config {
        SchedulerConfig::Constant { lr0 } => Ok(*lr0),
        SchedulerConfig::CosineDecay { lr_max, lr_min, horizon_t } => {
            let t = epoch.min(*horizon_t);
            Ok(half_cosine(*lr_max, *lr_min, t as f64, *horizon_t as f64))
        }
        SchedulerConfig::CyclicCosine { lr_max, lr_min, t0, t_mult } => {
            let mut start = 0usize;
            let mut len = *t0;
            while epoch >= start + len {
                start += len;
                len = len.saturating_mul(*t_mult);
            }
            let t = epoch - start;
            Ok(half_cosine(*lr_max, *lr_min, t as f64, len as f64))
        }
        SchedulerConfig::ExponentialDecay { lr0, gamma } => Ok(lr0 * gamma.powi(epoch as i32)),
        SchedulerConfig::ArcControlled { .. } => Err(Error::usage(
            "the controller-driven schedule is stateful; drive it with arc_step",
        )),
    }
}

/// Exactly `invocations` distinct epochs with maximally even spacing:
/// `floor((i + 1) * total / invocations) - 1` for `i` in `0..invocations`.
/// The last entry is always `total_epochs - 1`.
pub fn invocation_epochs(total_epochs: usize, invocations: usize) -> Result<Vec<usize>> {
    if invocations == 0 || invocations > total_epochs {
        return Err(Error::usage(format!(
            "need 1 <= invocations <= total_epochs, got {invocations} of {total_epochs}"
        )));
    }
    Ok((0..invocations)
        .map(|i| (i + 1) * total_epochs / invocations - 1)
        .collect())
}

/// One controller invocation: build the feature window over the most recent
/// segment of `n` epochs (plus up to `2n` of history), predict, and scale
/// the LR by the decision factor. Decisions compound across invocations.
pub fn arc_step(
    current_lr: f64,
    history: &[HistoryRecord],
    n: usize,
    weights: &ControllerWeights,
) -> Result<(f64, LrDecision)> {
    if !(current_lr > 0.0) || !current_lr.is_finite() {
        return Err(Error::usage(format!("current_lr must be positive, got {current_lr}")));
    }
    let window = build_feature_window(history, n, history.len())?;
    let decision = predict(weights, &window)?;
    Ok((current_lr * decision.multiplier(), decision))
}

/// One epoch of an LR trace: the rate in force and the decision taken at
/// the end of the epoch, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch: usize,
    pub lr: f64,
    pub decision: Option<LrDecision>,
}

/// Per-epoch LR trace of one run.
pub type LrTrace = Vec<TracePoint>;
