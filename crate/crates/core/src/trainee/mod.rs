//! Desk-scale training tasks under LR control.
//!
//! Three families span the label space: a quadratic bowl (clean
//! decrease/increase regimes with a known stability bound), logistic
//! regression on Gaussian blobs (convex, mild), and a small MLP on
//! concentric rings (non-convex, noisy). Every trainee has analytic
//! gradients, injectable gradient noise, and exact snapshot/restore.

mod logistic;
mod mlp;
mod quadratic;

pub use logistic::LogisticTrainee;
pub use mlp::MlpTrainee;
pub use quadratic::QuadraticTrainee;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Per-epoch observations reported by `train_epochs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean of the per-step losses within the epoch.
    pub train_loss: f64,
    /// Validation loss at the end of the epoch.
    pub val_loss: f64,
    /// LR in force during the epoch.
    pub lr: f64,
}

/// Opaque serialized snapshot of a trainee's full training state (model,
/// optimizer buffers, RNG).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraineeCheckpoint {
    pub blob: Vec<u8>,
    pub epoch: u64,
    pub digest: [u8; 32],
}

impl TraineeCheckpoint {
    pub fn from_state<T: Serialize>(state: &T, epoch: u64) -> Result<Self> {
        let blob = serde_json::to_vec(state)?;
        let digest = Sha256::digest(&blob).into();
        Ok(TraineeCheckpoint { blob, epoch, digest })
    }

    pub fn to_state<T: DeserializeOwned>(&self) -> Result<T> {
        let digest: [u8; 32] = Sha256::digest(&self.blob).into();
        if digest != self.digest {
            return Err(Error::data("checkpoint digest mismatch"));
        }
        Ok(serde_json::from_slice(&self.blob)?)
    }
}

/// Task metadata for manifests and inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraineeDescription {
    pub task_id: String,
    pub family: String,
    pub model_params: usize,
    pub dataset_size: usize,
    pub steps_per_epoch: usize,
    pub noise: f64,
}

/// A training task under LR control.
///
/// A trainee instance is single-owner; duplication goes through
/// snapshot/restore. `val_loss` is a pure observation and never advances
/// state. Divergence is not an error: losses may become non-finite and the
/// caller decides what to do about it.
pub trait Trainee {
    /// Advance by `lrs.len()` epochs, one LR per epoch, reporting per-epoch
    /// stats.
    fn train_epochs(&mut self, lrs: &[f64]) -> Result<Vec<EpochStats>>;

    /// Current validation loss, without advancing state.
    fn val_loss(&self) -> f64;

    /// Completed epoch count.
    fn epoch(&self) -> u64;

    fn snapshot(&self) -> Result<TraineeCheckpoint>;

    fn restore(&mut self, checkpoint: &TraineeCheckpoint) -> Result<()>;

    /// Re-key the trainee's stochastic stream (shuffling and gradient
    /// noise). Branches continued from one checkpoint use distinct streams
    /// so repeated segments are statistically, not bitwise, identical.
    fn reseed(&mut self, stream: u64);

    fn description(&self) -> TraineeDescription;
}

/// Family-specific shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskFamily {
    Quadratic { dim: usize, lambda_min: f64, lambda_max: f64 },
    Logistic { features: usize },
    Mlp { hidden: usize },
}

impl TaskFamily {
    pub fn name(&self) -> &'static str {
        match self {
            TaskFamily::Quadratic { .. } => "quadratic",
            TaskFamily::Logistic { .. } => "logistic",
            TaskFamily::Mlp { .. } => "mlp",
        }
    }
}

/// Registered task: family shape, LR sampling range, noise level, data seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub family: TaskFamily,
    pub min_lr0: f64,
    pub max_lr0: f64,
    pub default_noise: f64,
    pub dataset_size: usize,
    pub seed: u64,
    pub steps_per_epoch: usize,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr0 > 0.0) || !(self.max_lr0 > self.min_lr0) {
            return Err(Error::data(format!(
                "task {}: need 0 < min_lr0 < max_lr0",
                self.task_id
            )));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::data(format!(
                "task {}: steps_per_epoch must be positive",
                self.task_id
            )));
        }
        Ok(())
    }
}

/// Instantiate a trainee for `spec`. Task data derives from `spec.seed`;
/// model initialization and the stochastic stream derive from `init_seed`,
/// so repeated runs of one task share data but not trajectories.
pub fn make_trainee(spec: &TaskSpec, init_seed: u64) -> Result<Box<dyn Trainee>> {
    spec.validate()?;
    Ok(match spec.family {
        TaskFamily::Quadratic { .. } => Box::new(QuadraticTrainee::new(spec, init_seed)?),
        TaskFamily::Logistic { .. } => Box::new(LogisticTrainee::new(spec, init_seed)?),
        TaskFamily::Mlp { .. } => Box::new(MlpTrainee::new(spec, init_seed)?),
    })
}

/// Built-in task registry. IDs are stable and addressable from config files
/// and the CLI.
pub fn builtin_tasks() -> Vec<TaskSpec> {
    vec![
        TaskSpec {
            task_id: "quad-basin".into(),
            family: TaskFamily::Quadratic { dim: 24, lambda_min: 0.05, lambda_max: 8.0 },
            min_lr0: 1e-4,
            max_lr0: 0.3,
            default_noise: 0.01,
            dataset_size: 0,
            seed: 101,
            steps_per_epoch: 50,
        },
        TaskSpec {
            task_id: "quad-cliff".into(),
            family: TaskFamily::Quadratic { dim: 16, lambda_min: 0.5, lambda_max: 60.0 },
            min_lr0: 6e-3,
            max_lr0: 3.2e-2,
            default_noise: 0.004,
            dataset_size: 0,
            seed: 102,
            steps_per_epoch: 50,
        },
        TaskSpec {
            task_id: "logit-blobs".into(),
            family: TaskFamily::Logistic { features: 8 },
            min_lr0: 5e-2,
            max_lr0: 12.0,
            default_noise: 0.0,
            dataset_size: 256,
            seed: 103,
            steps_per_epoch: 50,
        },
        TaskSpec {
            task_id: "mlp-rings".into(),
            family: TaskFamily::Mlp { hidden: 12 },
            min_lr0: 3e-3,
            max_lr0: 3.0,
            default_noise: 0.005,
            dataset_size: 256,
            seed: 104,
            steps_per_epoch: 50,
        },
        // Held-out variants for benchmarking a trained controller on tasks
        // it never saw during data generation.
        TaskSpec {
            task_id: "quad-ridge".into(),
            family: TaskFamily::Quadratic { dim: 20, lambda_min: 0.2, lambda_max: 20.0 },
            min_lr0: 1e-5,
            max_lr0: 1.6e-1,
            default_noise: 0.008,
            dataset_size: 0,
            seed: 105,
            steps_per_epoch: 50,
        },
        TaskSpec {
            task_id: "mlp-rings-wide".into(),
            family: TaskFamily::Mlp { hidden: 16 },
            min_lr0: 1e-3,
            max_lr0: 1.0,
            default_noise: 0.005,
            dataset_size: 320,
            seed: 106,
            steps_per_epoch: 50,
        },
    ]
}

pub fn find_task(task_id: &str) -> Result<TaskSpec> {
    builtin_tasks()
        .into_iter()
        .find(|t| t.task_id == task_id)
        .ok_or_else(|| {
            let known: Vec<String> = builtin_tasks().into_iter().map(|t| t.task_id).collect();
            Error::usage(format!(
                "unknown task id '{task_id}' (known: {})",
                known.join(", ")
            ))
        })
}
