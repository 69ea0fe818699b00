//! The controller classifier: a 1D-conv feature extractor, two stacked
//! recurrent memory layers, and a dense head over three decision classes.
//!
//! All gradients are hand-derived per layer (no autodiff) and verified
//! against central finite differences in the test suite. Parameters live in
//! one flat `f64` vector with a fixed block layout, which keeps the Adam
//! update, gradient checking, and persistence trivial.

pub mod adam;
pub mod io;
pub mod layers;
pub mod metrics;
mod tensor;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use metrics::{weighted_accuracy, ConfusionMatrix, RewardPenaltyMatrix};
pub use tensor::Tensor;
pub use train::{
    evaluate_dataset, evaluate_subset, split_indices, train_controller, EpochPoint, TrainConfig,
    TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::LrDecision;
use crate::error::{Error, Result};
use crate::signal::{FeatureWindow, CHANNELS, WINDOW_LEN};
use layers::{relu, relu_backward, softmax, Conv1dSpec, DenseSpec, LstmSpec};

/// Hard ceiling on trainable parameters, asserted at construction.
pub const PARAM_BUDGET: usize = 80_000;

/// Layer widths. The fixed structure is conv -> conv -> recurrent ->
/// recurrent -> dense -> dense -> 3 logits; only the sizes vary, within the
/// parameter budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub window: usize,
    pub conv1_out: usize,
    pub conv1_kernel: usize,
    pub conv1_stride: usize,
    pub conv2_out: usize,
    pub conv2_kernel: usize,
    pub conv2_stride: usize,
    pub hidden: usize,
    pub dense1_out: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            window: WINDOW_LEN,
            conv1_out: 16,
            conv1_kernel: 5,
            conv1_stride: 2,
            conv2_out: 32,
            conv2_kernel: 5,
            conv2_stride: 2,
            hidden: 32,
            dense1_out: 16,
        }
    }
}

/// Parameter block identifiers in declared (persistence) order.
pub const BLOCK_NAMES: [&str; 14] = [
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "lstm1_w", "lstm1_u", "lstm1_b", "lstm2_w",
    "lstm2_u", "lstm2_b", "dense1_w", "dense1_b", "dense2_w", "dense2_b",
];

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    /// (name, offset, len) per block, in declared order.
    pub blocks: Vec<(&'static str, usize, usize)>,
    pub total: usize,
}

impl Architecture {
    pub fn conv1(&self) -> Conv1dSpec {
        Conv1dSpec {
            in_channels: CHANNELS,
            out_channels: self.conv1_out,
            kernel: self.conv1_kernel,
            stride: self.conv1_stride,
        }
    }

    pub fn conv2(&self) -> Conv1dSpec {
        Conv1dSpec {
            in_channels: self.conv1_out,
            out_channels: self.conv2_out,
            kernel: self.conv2_kernel,
            stride: self.conv2_stride,
        }
    }

    pub fn lstm1(&self) -> LstmSpec {
        LstmSpec { input: self.conv2_out, hidden: self.hidden }
    }

    pub fn lstm2(&self) -> LstmSpec {
        LstmSpec { input: self.hidden, hidden: self.hidden }
    }

    pub fn dense1(&self) -> DenseSpec {
        DenseSpec { input: self.hidden, output: self.dense1_out }
    }

    pub fn dense2(&self) -> DenseSpec {
        DenseSpec { input: self.dense1_out, output: 3 }
    }

    /// Sequence length after the two convolutions.
    pub fn seq_len(&self) -> usize {
        self.conv2().out_len(self.conv1().out_len(self.window))
    }

    fn validate(&self) -> Result<()> {
        if self.window < self.conv1_kernel
            || self.conv1().out_len(self.window) < self.conv2_kernel
        {
            return Err(Error::usage("architecture: window too short for kernels"));
        }
        if self.conv1_stride == 0 || self.conv2_stride == 0 {
            return Err(Error::usage("architecture: strides must be positive"));
        }
        if [self.conv1_out, self.conv2_out, self.hidden, self.dense1_out]
            .iter()
            .any(|&d| d == 0)
        {
            return Err(Error::usage("architecture: layer widths must be positive"));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        let sizes = [
            self.conv1().weight_len(),
            self.conv1().bias_len(),
            self.conv2().weight_len(),
            self.conv2().bias_len(),
            self.lstm1().w_len(),
            self.lstm1().u_len(),
            self.lstm1().b_len(),
            self.lstm2().w_len(),
            self.lstm2().u_len(),
            self.lstm2().b_len(),
            self.dense1().weight_len(),
            self.dense1().bias_len(),
            self.dense2().weight_len(),
            self.dense2().bias_len(),
        ];
        let mut blocks = Vec::with_capacity(BLOCK_NAMES.len());
        let mut offset = 0;
        for (name, len) in BLOCK_NAMES.iter().zip(sizes) {
            blocks.push((*name, offset, len));
            offset += len;
        }
        Layout { blocks, total: offset }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

/// All trainable parameters of the controller plus the construction seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerWeights {
    arch: Architecture,
    seed: u64,
    params: Vec<f64>,
}

impl ControllerWeights {
    /// Initialize with uniform fan-in scaling (`U(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in))` per weight block) and zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if layout.total >= PARAM_BUDGET {
            return Err(Error::usage(format!(
                "architecture has {} parameters, budget is {}",
                layout.total, PARAM_BUDGET
            )));
        }
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_ins: [(usize, usize); 14] = [
            (0, CHANNELS * arch.conv1_kernel),
            (1, 0), // bias blocks stay zero
            (2, arch.conv1_out * arch.conv2_kernel),
            (3, 0),
            (4, arch.conv2_out),
            (5, arch.hidden),
            (6, 0),
            (7, arch.hidden),
            (8, arch.hidden),
            (9, 0),
            (10, arch.hidden),
            (11, 0),
            (12, arch.dense1_out),
            (13, 0),
        ];
        for (idx, fan_in) in fan_ins {
            let (_, offset, len) = layout.blocks[idx];
            if fan_in == 0 {
                continue;
            }
            let scale = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[offset..offset + len] {
                *p = (rng.random::<f64>() * 2.0 - 1.0) * scale;
            }
        }
        Ok(ControllerWeights { arch, seed, params })
    }

    /// Rebuild from persisted parts, re-checking the layout and budget.
    pub(crate) fn from_parts(arch: Architecture, seed: u64, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if layout.total >= PARAM_BUDGET {
            return Err(Error::usage("architecture exceeds the parameter budget"));
        }
        if params.len() != layout.total {
            return Err(Error::data(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::data("weights hold non-finite parameters"));
        }
        Ok(ControllerWeights { arch, seed, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Named block slice, in the declared persistence order.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        let layout = self.arch.layout();
        layout
            .blocks
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|&(_, offset, len)| &self.params[offset..offset + len])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let layout = self.arch.layout();
        let &(_, offset, len) = layout.blocks.iter().find(|(n, _, _)| *n == name)?;
        Some(&mut self.params[offset..offset + len])
    }

    fn blk(&self, idx: usize, layout: &Layout) -> &[f64] {
        let (_, offset, len) = layout.blocks[idx];
        &self.params[offset..offset + len]
    }
}

/// Activations kept alive between the forward and backward pass of one
/// sample.
struct SampleTape {
    x: Vec<f64>,
    conv1_pre: Vec<f64>,
    conv1_act: Vec<f64>,
    conv2_pre: Vec<f64>,
    seq: Vec<f64>,
    lstm1: layers::LstmCache,
    lstm2: layers::LstmCache,
    dense1_pre: Vec<f64>,
    dense1_act: Vec<f64>,
    probs: Vec<f64>,
    logits: Vec<f64>,
}

fn check_finite(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("{name} produced non-finite values")));
    }
    Ok(())
}

fn window_to_input(arch: &Architecture, window: &FeatureWindow) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(CHANNELS * arch.window);
    for ch in window.channels() {
        if ch.len() != arch.window {
            return Err(Error::usage(format!(
                "window length {} does not match architecture window {}",
                ch.len(),
                arch.window
            )));
        }
        if ch.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("feature window holds non-finite values"));
        }
        x.extend_from_slice(ch);
    }
    Ok(x)
}

fn forward_sample(weights: &ControllerWeights, window: &FeatureWindow) -> Result<SampleTape> {
    let arch = &weights.arch;
    let layout = arch.layout();
    let x = window_to_input(arch, window)?;

    let conv1 = arch.conv1();
    let conv1_pre = conv1.forward(weights.blk(0, &layout), weights.blk(1, &layout), &x, arch.window);
    check_finite("conv1", &conv1_pre)?;
    let conv1_act = relu(&conv1_pre);
    let len1 = conv1.out_len(arch.window);

    let conv2 = arch.conv2();
    let conv2_pre = conv2.forward(weights.blk(2, &layout), weights.blk(3, &layout), &conv1_act, len1);
    check_finite("conv2", &conv2_pre)?;
    let conv2_act = relu(&conv2_pre);
    let steps = conv2.out_len(len1);

    // [channel][time] -> [time][channel] for the recurrent layers.
    let feat = arch.conv2_out;
    let mut seq = vec![0.0; steps * feat];
    for c in 0..feat {
        for t in 0..steps {
            seq[t * feat + c] = conv2_act[c * steps + t];
        }
    }

    let lstm1 = arch.lstm1();
    let cache1 = lstm1.forward(
        weights.blk(4, &layout),
        weights.blk(5, &layout),
        weights.blk(6, &layout),
        &seq,
        steps,
    );
    check_finite("lstm1", &cache1.hidden_seq)?;

    let lstm2 = arch.lstm2();
    let cache2 = lstm2.forward(
        weights.blk(7, &layout),
        weights.blk(8, &layout),
        weights.blk(9, &layout),
        &cache1.hidden_seq,
        steps,
    );
    check_finite("lstm2", &cache2.hidden_seq)?;

    // Classifier reads the final hidden state.
    let final_h = cache2.final_hidden(arch.hidden).to_vec();
    let dense1 = arch.dense1();
    let dense1_pre = dense1.forward(weights.blk(10, &layout), weights.blk(11, &layout), &final_h);
    check_finite("dense1", &dense1_pre)?;
    let dense1_act = relu(&dense1_pre);

    let dense2 = arch.dense2();
    let logits = dense2.forward(weights.blk(12, &layout), weights.blk(13, &layout), &dense1_act);
    check_finite("dense2", &logits)?;
    let probs = softmax(&logits);

    Ok(SampleTape {
        x,
        conv1_pre,
        conv1_act,
        conv2_pre,
        seq,
        lstm1: cache1,
        lstm2: cache2,
        dense1_pre,
        dense1_act,
        probs,
        logits,
    })
}

/// Accumulate this sample's parameter gradients into `grads`, given the
/// gradient of the loss w.r.t. the logits.
fn backward_sample(
    weights: &ControllerWeights,
    tape: &SampleTape,
    dlogits: &[f64],
    grads: &mut [f64],
) {
    let arch = &weights.arch;
    let layout = arch.layout();
    let add = |grads: &mut [f64], idx: usize, g: &[f64]| {
        let (_, offset, len) = layout.blocks[idx];
        debug_assert_eq!(len, g.len());
        for (dst, src) in grads[offset..offset + len].iter_mut().zip(g) {
            *dst += src;
        }
    };

    let dense2 = arch.dense2();
    let (dw2, db2, d_dense1_act) = dense2.backward(weights.blk(12, &layout), &tape.dense1_act, dlogits);
    add(grads, 12, &dw2);
    add(grads, 13, &db2);

    let d_dense1_pre = relu_backward(&tape.dense1_pre, &d_dense1_act);
    let dense1 = arch.dense1();
    let final_h = tape.lstm2.final_hidden(arch.hidden);
    let (dw1, db1, d_final_h) = dense1.backward(weights.blk(10, &layout), final_h, &d_dense1_pre);
    add(grads, 10, &dw1);
    add(grads, 11, &db1);

    let steps = arch.seq_len();
    let h = arch.hidden;
    let mut dh2 = vec![0.0; steps * h];
    dh2[(steps - 1) * h..].copy_from_slice(&d_final_h);

    let lstm2 = arch.lstm2();
    let (dw_l2, du_l2, db_l2, d_h1_seq) = lstm2.backward(
        weights.blk(7, &layout),
        weights.blk(8, &layout),
        &tape.lstm1.hidden_seq,
        &tape.lstm2,
        &dh2,
    );
    add(grads, 7, &dw_l2);
    add(grads, 8, &du_l2);
    add(grads, 9, &db_l2);

    let lstm1 = arch.lstm1();
    let (dw_l1, du_l1, db_l1, d_seq) = lstm1.backward(
        weights.blk(4, &layout),
        weights.blk(5, &layout),
        &tape.seq,
        &tape.lstm1,
        &d_h1_seq,
    );
    add(grads, 4, &dw_l1);
    add(grads, 5, &du_l1);
    add(grads, 6, &db_l1);

    // Undo the [time][channel] transpose.
    let feat = arch.conv2_out;
    let mut d_conv2_act = vec![0.0; feat * steps];
    for c in 0..feat {
        for t in 0..steps {
            d_conv2_act[c * steps + t] = d_seq[t * feat + c];
        }
    }

    let d_conv2_pre = relu_backward(&tape.conv2_pre, &d_conv2_act);
    let conv2 = arch.conv2();
    let len1 = arch.conv1().out_len(arch.window);
    let (dw_c2, db_c2, d_conv1_act) =
        conv2.backward(weights.blk(2, &layout), &tape.conv1_act, len1, &d_conv2_pre);
    add(grads, 2, &dw_c2);
    add(grads, 3, &db_c2);

    let d_conv1_pre = relu_backward(&tape.conv1_pre, &d_conv1_act);
    let conv1 = arch.conv1();
    let (dw_c1, db_c1, _dx) =
        conv1.backward(weights.blk(0, &layout), &tape.x, arch.window, &d_conv1_pre);
    add(grads, 0, &dw_c1);
    add(grads, 1, &db_c1);
}

/// Class probabilities for a batch of windows, one row per window.
pub fn forward(weights: &ControllerWeights, batch: &[FeatureWindow]) -> Result<Tensor> {
    if batch.is_empty() {
        return Err(Error::usage("forward: empty batch"));
    }
    let mut data = Vec::with_capacity(batch.len() * 3);
    for window in batch {
        let tape = forward_sample(weights, window)?;
        data.extend_from_slice(&tape.probs);
    }
    Tensor::new(vec![batch.len(), 3], data)
}

/// Mean categorical cross-entropy over the batch plus the gradient of every
/// parameter, laid out exactly like `weights.params()`.
pub fn loss_and_grad(
    weights: &ControllerWeights,
    batch: &[FeatureWindow],
    labels: &[LrDecision],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::usage("loss_and_grad: empty batch"));
    }
    if batch.len() != labels.len() {
        return Err(Error::usage(format!(
            "loss_and_grad: {} windows but {} labels",
            batch.len(),
            labels.len()
        )));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; weights.param_count()];
    let mut loss = 0.0;
    for (window, &label) in batch.iter().zip(labels) {
        let tape = forward_sample(weights, window)?;
        // log-sum-exp form of -ln p[label], stable for extreme logits
        let m = tape.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + tape.logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
        loss += (lse - tape.logits[label.index()]) * inv_b;

        let mut dlogits = tape.probs.clone();
        dlogits[label.index()] -= 1.0;
        for g in &mut dlogits {
            *g *= inv_b;
        }
        backward_sample(weights, &tape, &dlogits, &mut grads);
    }
    if !loss.is_finite() {
        return Err(Error::numeric("loss is non-finite"));
    }
    check_finite("gradients", &grads)?;
    Ok((loss, grads))
}

/// Single-window decision: argmax class probability, exact ties broken
/// toward Constant, then Decrease.
pub fn predict(weights: &ControllerWeights, window: &FeatureWindow) -> Result<LrDecision> {
    let tape = forward_sample(weights, window)?;
    Ok(LrDecision::argmax([tape.probs[0], tape.probs[1], tape.probs[2]]))
}
