//! Gradient descent on a fixed positive-definite quadratic.
//!
//! The bowl is diagonal in its eigenbasis, so the dynamics have a closed
//! form: with gradient noise off, each coordinate contracts by
//! `(1 - lr * lambda_i)` per step and the loss is `0.5 * sum(lambda * x^2)`.
//! That closed form is the labeling oracle used by the protocol tests, and
//! `2 / lambda_max` is the exact stability bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EpochStats, TaskFamily, TaskSpec, Trainee, TraineeCheckpoint, TraineeDescription};
use crate::error::{Error, Result};
use crate::seeds::derive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QuadState {
    coords: Vec<f64>,
    epoch: u64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct QuadraticTrainee {
    task_id: String,
    /// Eigenvalues of the quadratic, fixed per task seed.
    spectrum: Vec<f64>,
    noise: f64,
    steps_per_epoch: usize,
    state: QuadState,
}

impl QuadraticTrainee {
    pub fn new(spec: &TaskSpec, init_seed: u64) -> Result<Self> {
        let TaskFamily::Quadratic { dim, lambda_min, lambda_max } = spec.family else {
            return Err(Error::usage("spec family is not quadratic"));
        };
        if dim == 0 || !(lambda_min > 0.0) || lambda_max < lambda_min {
            return Err(Error::data("quadratic: need dim > 0 and 0 < lambda_min <= lambda_max"));
        }
        // Spectrum comes from the task seed (the "dataset"); the start point
        // comes from the init seed (the "model init").
        let mut task_rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, &[0]));
        let ln_min = lambda_min.ln();
        let ln_max = lambda_max.ln();
        let mut spectrum: Vec<f64> = (0..dim)
            .map(|_| (ln_min + task_rng.random::<f64>() * (ln_max - ln_min)).exp())
            .collect();
        // Pin the extremes so the stability bound is exactly 2/lambda_max.
        spectrum[0] = lambda_max;
        if dim > 1 {
            spectrum[1] = lambda_min;
        }

        let mut init_rng = ChaCha8Rng::seed_from_u64(derive(init_seed, &[1]));
        let coords: Vec<f64> = (0..dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut init_rng);
                1.0 + 0.3 * g
            })
            .collect();

        Ok(QuadraticTrainee {
            task_id: spec.task_id.clone(),
            spectrum,
            noise: spec.default_noise,
            steps_per_epoch: spec.steps_per_epoch,
            state: QuadState {
                coords,
                epoch: 0,
                rng: ChaCha8Rng::seed_from_u64(derive(init_seed, &[2])),
            },
        })
    }

    fn loss(&self) -> f64 {
        self.state
            .coords
            .iter()
            .zip(&self.spectrum)
            .map(|(x, l)| 0.5 * l * x * x)
            .sum()
    }

    /// Eigenvalues, for oracle computations in tests.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Current point in the eigenbasis, for oracle computations in tests.
    pub fn coords(&self) -> &[f64] {
        &self.state.coords
    }

    pub fn lambda_max(&self) -> f64 {
        self.spectrum.iter().cloned().fold(0.0, f64::max)
    }

    /// Disable or re-level gradient noise (tests use noise 0 for exact
    /// closed-form agreement).
    pub fn set_noise(&mut self, noise: f64) {
        self.noise = noise;
    }
}

impl Trainee for QuadraticTrainee {
    fn train_epochs(&mut self, lrs: &[f64]) -> Result<Vec<EpochStats>> {
        let mut out = Vec::with_capacity(lrs.len());
        for &lr in lrs {
            if !(lr >= 0.0) {
                return Err(Error::usage(format!("negative or NaN lr {lr}")));
            }
            let mut step_loss_sum = 0.0;
            for _ in 0..self.steps_per_epoch {
                step_loss_sum += self.loss();
                for (x, &l) in self.state.coords.iter_mut().zip(&self.spectrum) {
                    let mut g = l * *x;
                    if self.noise > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut self.state.rng);
                        g += self.noise * z;
                    }
                    *x -= lr * g;
                }
            }
            self.state.epoch += 1;
            out.push(EpochStats {
                train_loss: step_loss_sum / self.steps_per_epoch as f64,
                val_loss: self.loss(),
                lr,
            });
        }
        Ok(out)
    }

    fn val_loss(&self) -> f64 {
        self.loss()
    }

    fn epoch(&self) -> u64 {
        self.state.epoch
    }

    fn snapshot(&self) -> Result<TraineeCheckpoint> {
        TraineeCheckpoint::from_state(&self.state, self.state.epoch)
    }

    fn restore(&mut self, checkpoint: &TraineeCheckpoint) -> Result<()> {
        let state: QuadState = checkpoint.to_state()?;
        if state.coords.len() != self.spectrum.len() {
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
            family: "quadratic".into(),
            model_params: self.spectrum.len(),
            dataset_size: 0,
            steps_per_epoch: self.steps_per_epoch,
            noise: self.noise,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(noise: f64) -> TaskSpec {
        TaskSpec {
            task_id: "q-test".into(),
            family: TaskFamily::Quadratic { dim: 8, lambda_min: 0.2, lambda_max: 4.0 },
            min_lr0: 1e-4,
            max_lr0: 0.4,
            default_noise: noise,
            dataset_size: 0,
            seed: 77,
            steps_per_epoch: 10,
        }
    }

    #[test]
    fn zero_lr_keeps_loss_constant() {
        let mut t = QuadraticTrainee::new(&spec(0.0), 1).unwrap();
        let before = t.val_loss();
        let stats = t.train_epochs(&[0.0; 4]).unwrap();
        assert_eq!(t.val_loss(), before);
        for s in stats {
            assert_eq!(s.val_loss, before);
        }
    }

    #[test]
    fn lr_above_stability_bound_diverges_within_one_epoch() {
        let mut t = QuadraticTrainee::new(&spec(0.0), 2).unwrap();
        let bound = 2.0 / t.lambda_max();
        let before = t.val_loss();
        t.train_epochs(&[bound * 2.0]).unwrap();
        assert!(t.val_loss() > before * 1e6, "loss must explode above 2/lambda_max");
    }

    #[test]
    fn noiseless_dynamics_match_closed_form_exactly_shaped() {
        let mut t = QuadraticTrainee::new(&spec(0.0), 3).unwrap();
        let lr = 0.05;
        let spectrum = t.spectrum().to_vec();
        let x0 = t.coords().to_vec();
        let steps = 10 * 3; // 3 epochs
        t.train_epochs(&[lr; 3]).unwrap();
        let expect: f64 = spectrum
            .iter()
            .zip(&x0)
            .map(|(&l, &x)| 0.5 * l * (x * (1.0 - lr * l).powi(steps)).powi(2))
            .sum();
        let got = t.val_loss();
        assert!(
            (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
            "got {got}, closed form {expect}"
        );
    }

    #[test]
    fn noisy_expected_loss_matches_recursion_within_mc_tolerance() {
        // E[x^2] evolves as (1-lr*l)^2 E[x^2] + lr^2 * sigma^2 per step.
        let sp = spec(0.05);
        let lr = 0.05;
        let epochs = 2;
        let reference = QuadraticTrainee::new(&sp, 0).unwrap();
        let spectrum = reference.spectrum().to_vec();
        let x0 = reference.coords().to_vec();

        let steps = sp.steps_per_epoch * epochs;
        let expect: f64 = spectrum
            .iter()
            .zip(&x0)
            .map(|(&l, &x)| {
                let mut ex2 = x * x;
                let c = (1.0 - lr * l) * (1.0 - lr * l);
                for _ in 0..steps {
                    ex2 = c * ex2 + lr * lr * 0.05 * 0.05;
                }
                0.5 * l * ex2
            })
            .sum();

        let reps = 400;
        let mut mean = 0.0;
        for rep in 0..reps {
            // Same start point every repetition, fresh noise stream.
            let mut t = QuadraticTrainee::new(&sp, 0).unwrap();
            t.reseed(1000 + rep);
            t.train_epochs(&[lr; 2]).unwrap();
            mean += t.val_loss();
        }
        mean /= reps as f64;
        let rel = (mean - expect).abs() / expect;
        assert!(rel < 0.1, "MC mean {mean} vs closed form {expect} (rel {rel})");
    }

    #[test]
    fn analytic_gradient_matches_finite_difference() {
        let t = QuadraticTrainee::new(&spec(0.0), 4).unwrap();
        let eps = 1e-6;
        for i in 0..t.coords().len() {
            let mut tp = t.clone();
            tp.state.coords[i] += eps;
            let mut tm = t.clone();
            tm.state.coords[i] -= eps;
            let num = (tp.loss() - tm.loss()) / (2.0 * eps);
            let analytic = t.spectrum[i] * t.state.coords[i];
            assert!((num - analytic).abs() / analytic.abs().max(1e-8) < 1e-6);
        }
    }

    #[test]
    fn distinct_streams_diverge_noisily() {
        let sp = spec(0.1);
        let mut a = QuadraticTrainee::new(&sp, 5).unwrap();
        let mut b = QuadraticTrainee::new(&sp, 5).unwrap();
        b.reseed(999);
        a.train_epochs(&[0.05; 2]).unwrap();
        b.train_epochs(&[0.05; 2]).unwrap();
        assert_ne!(a.val_loss(), b.val_loss());
    }
}
