//! One-hidden-layer network on concentric rings: the non-convex family.
//!
//! 2D inputs, tanh hidden layer, sigmoid output, mini-batch SGD with
//! momentum. Too-large LRs oscillate, too-small LRs stall, which gives the
//! labeling protocol clear work to do. The momentum buffer makes the moment
//! state part of the checkpoint contract observable.

use rand::prelude::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EpochStats, TaskFamily, TaskSpec, Trainee, TraineeCheckpoint, TraineeDescription};
use crate::error::{Error, Result};
use crate::seeds::derive;

const BATCH: usize = 32;
const MOMENTUM: f64 = 0.9;
const INPUT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MlpState {
    /// Parameters: w1 `[hidden][2]`, b1 `[hidden]`, w2 `[hidden]`, b2.
    params: Vec<f64>,
    /// Momentum buffer, same layout as `params`.
    velocity: Vec<f64>,
    epoch: u64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct MlpTrainee {
    task_id: String,
    hidden: usize,
    train_x: Vec<f64>,
    train_y: Vec<f64>,
    val_x: Vec<f64>,
    val_y: Vec<f64>,
    noise: f64,
    steps_per_epoch: usize,
    state: MlpState,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl MlpTrainee {
    pub fn new(spec: &TaskSpec, init_seed: u64) -> Result<Self> {
        let TaskFamily::Mlp { hidden } = spec.family else {
            return Err(Error::usage("spec family is not mlp"));
        };
        if hidden == 0 || spec.dataset_size < 2 * BATCH {
            return Err(Error::data(format!(
                "mlp: need hidden > 0 and dataset_size >= {}",
                2 * BATCH
            )));
        }
        let n_train = spec.dataset_size;
        let n_val = (spec.dataset_size / 4).max(BATCH);

        // Concentric rings: class 0 at radius 1, class 1 at radius 2.5.
        let mut data_rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, &[5]));
        let sample_set = |n: usize, rng: &mut ChaCha8Rng| {
            let mut xs = Vec::with_capacity(n * INPUT);
            let mut ys = Vec::with_capacity(n);
            for i in 0..n {
                let y = (i % 2) as f64;
                let radius = if y > 0.5 { 2.5 } else { 1.0 };
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                let jitter: f64 = StandardNormal.sample(rng);
                let r = radius + 0.2 * jitter;
                xs.push(r * theta.cos());
                xs.push(r * theta.sin());
                ys.push(y);
            }
            (xs, ys)
        };
        let (train_x, train_y) = sample_set(n_train, &mut data_rng);
        let (val_x, val_y) = sample_set(n_val, &mut data_rng);

        let param_len = hidden * INPUT + hidden + hidden + 1;
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive(init_seed, &[6]));
        let params: Vec<f64> = (0..param_len)
            .map(|_| (init_rng.random::<f64>() * 2.0 - 1.0) * 0.5)
            .collect();

        Ok(MlpTrainee {
            task_id: spec.task_id.clone(),
            hidden,
            train_x,
            train_y,
            val_x,
            val_y,
            noise: spec.default_noise,
            steps_per_epoch: spec.steps_per_epoch,
            state: MlpState {
                velocity: vec![0.0; params.len()],
                params,
                epoch: 0,
                rng: ChaCha8Rng::seed_from_u64(derive(init_seed, &[7])),
            },
        })
    }

    fn unpack(params: &[f64], hidden: usize) -> (&[f64], &[f64], &[f64], f64) {
        let w1 = &params[..hidden * INPUT];
        let b1 = &params[hidden * INPUT..hidden * INPUT + hidden];
        let w2 = &params[hidden * INPUT + hidden..hidden * INPUT + 2 * hidden];
        let b2 = params[hidden * INPUT + 2 * hidden];
        (w1, b1, w2, b2)
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let (w1, b1, w2, b2) = Self::unpack(&self.state.params, self.hidden);
        let mut z = b2;
        for j in 0..self.hidden {
            let pre = w1[j * INPUT] * x[0] + w1[j * INPUT + 1] * x[1] + b1[j];
            z += w2[j] * pre.tanh();
        }
        z
    }

    fn mean_loss(&self, xs: &[f64], ys: &[f64]) -> f64 {
        let n = ys.len();
        let mut sum = 0.0;
        for i in 0..n {
            sum += bce(self.logit(&xs[i * INPUT..(i + 1) * INPUT]), ys[i]);
        }
        sum / n as f64
    }

    /// Mean gradient over the batch given by `idx`, for tests and training.
    pub fn batch_gradient(&self, idx: &[usize]) -> Vec<f64> {
        let h = self.hidden;
        let (w1, b1, w2, b2) = Self::unpack(&self.state.params, h);
        let mut grad = vec![0.0; self.state.params.len()];
        for &i in idx {
            let x = &self.train_x[i * INPUT..(i + 1) * INPUT];
            let mut hid = vec![0.0; h];
            let mut z = b2;
            for j in 0..h {
                let pre = w1[j * INPUT] * x[0] + w1[j * INPUT + 1] * x[1] + b1[j];
                hid[j] = pre.tanh();
                z += w2[j] * hid[j];
            }
            let dz = sigmoid(z) - self.train_y[i];
            for j in 0..h {
                let dh = dz * w2[j] * (1.0 - hid[j] * hid[j]);
                grad[j * INPUT] += dh * x[0];
                grad[j * INPUT + 1] += dh * x[1];
                grad[h * INPUT + j] += dh; // b1
                grad[h * INPUT + h + j] += dz * hid[j]; // w2
            }
            grad[h * INPUT + 2 * h] += dz; // b2
        }
        for g in &mut grad {
            *g /= idx.len() as f64;
        }
        grad
    }

    /// Mean loss over the batch given by `idx` (pre-update), for tests.
    pub fn batch_loss(&self, idx: &[usize]) -> f64 {
        let mut sum = 0.0;
        for &i in idx {
            let x = &self.train_x[i * INPUT..(i + 1) * INPUT];
            sum += bce(self.logit(x), self.train_y[i]);
        }
        sum / idx.len() as f64
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.state.params
    }
}

impl Trainee for MlpTrainee {
    fn train_epochs(&mut self, lrs: &[f64]) -> Result<Vec<EpochStats>> {
        let n = self.train_y.len();
        let mut out = Vec::with_capacity(lrs.len());
        for &lr in lrs {
            if !(lr >= 0.0) {
                return Err(Error::usage(format!("negative or NaN lr {lr}")));
            }
            // The order is a pure function of the RNG state: it resets to
            // identity at every epoch so train_epochs(a+b) == a then b.
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut self.state.rng);
            let mut cursor = 0usize;
            let mut step_loss_sum = 0.0;
            for _ in 0..self.steps_per_epoch {
                if cursor + BATCH > n {
                    order.shuffle(&mut self.state.rng);
                    cursor = 0;
                }
                let idx = &order[cursor..cursor + BATCH];
                cursor += BATCH;
                step_loss_sum += self.batch_loss(idx);
                let mut grad = self.batch_gradient(idx);
                if self.noise > 0.0 {
                    for g in &mut grad {
                        let z: f64 = StandardNormal.sample(&mut self.state.rng);
                        *g += self.noise * z;
                    }
                }
                for j in 0..grad.len() {
                    self.state.velocity[j] = MOMENTUM * self.state.velocity[j] + grad[j];
                    self.state.params[j] -= lr * self.state.velocity[j];
                }
            }
            self.state.epoch += 1;
            out.push(EpochStats {
                train_loss: step_loss_sum / self.steps_per_epoch as f64,
                val_loss: self.val_loss(),
                lr,
            });
        }
        Ok(out)
    }

    fn val_loss(&self) -> f64 {
        self.mean_loss(&self.val_x, &self.val_y)
    }

    fn epoch(&self) -> u64 {
        self.state.epoch
    }

    fn snapshot(&self) -> Result<TraineeCheckpoint> {
        TraineeCheckpoint::from_state(&self.state, self.state.epoch)
    }

    fn restore(&mut self, checkpoint: &TraineeCheckpoint) -> Result<()> {
        let state: MlpState = checkpoint.to_state()?;
        if state.params.len() != self.state.params.len() {
            return Err(Error::data("checkpoint dimension mismatch"));
        }
        self.state = state;
        Ok(())
    }

    fn reseed(&mut self, stream: u64) {
        self.state.rng = ChaCha8Rng::seed_from_u64(stream);
    }

    fn description(&self) -> TraineeDescription {
        TraineeDescription {
            task_id: self.task_id.clone(),
            family: "mlp".into(),
            model_params: self.state.params.len(),
            dataset_size: self.train_y.len(),
            steps_per_epoch: self.steps_per_epoch,
            noise: self.noise,
        }
    }
}
