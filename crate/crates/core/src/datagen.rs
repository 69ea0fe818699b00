//! Branch-and-label data generation over trainee tasks.
//!
//! Each run alternates mainline segments with three branch probes. After
//! training a segment of `n` epochs at LR `r`, the trainee state is
//! checkpointed; three continuations at `1.618r`, `r`, and `0.618r` each
//! train `n` more epochs from the checkpoint and report their end-of-branch
//! validation losses. The argmin branch labels the segment. The worst branch
//! is eliminated and one of the two survivors is continued at random. Since
//! the continued segment repeats one branch under a fresh stochastic stream,
//! its loss re-measures that branch: if the re-measurement breaks the loss
//! ordering, the previous label is demoted to Constant.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::LrDecision;
use crate::error::{Error, Result};
use crate::seeds::derive;
use crate::signal::{build_feature_window, FeatureWindow, HistoryRecord};
use crate::trainee::{make_trainee, TaskSpec, Trainee};

/// Serialize non-finite losses as null; read null back as +inf (a diverged
/// branch is treated as infinitely bad).
mod maybe_diverged {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// End-of-branch validation losses, in branch order (increase, constant,
/// decrease).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchLosses {
    #[serde(with = "maybe_diverged")]
    pub l_plus: f64,
    #[serde(with = "maybe_diverged")]
    pub l_one: f64,
    #[serde(with = "maybe_diverged")]
    pub l_minus: f64,
}

impl BranchLosses {
    pub fn get(&self, d: LrDecision) -> f64 {
        match d {
            LrDecision::Increase => self.l_plus,
            LrDecision::Constant => self.l_one,
            LrDecision::Decrease => self.l_minus,
        }
    }

    fn set(&mut self, d: LrDecision, v: f64) {
        match d {
            LrDecision::Increase => self.l_plus = v,
            LrDecision::Constant => self.l_one = v,
            LrDecision::Decrease => self.l_minus = v,
        }
    }
}

/// One labeled data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub window: FeatureWindow,
    pub label: LrDecision,
    /// Segment length in epochs.
    pub n: usize,
    pub segment_index: usize,
    pub task_id: String,
    /// LR in force during the segment (the base the branch factors apply to).
    pub lr_at_branch: f64,
    pub branch_losses: BranchLosses,
    /// True when the follow-up segment demoted the label to Constant.
    pub corrected: bool,
    /// False only for the final segment of a run (no follow-up measurement).
    pub correctable: bool,
    /// True when the sample comes from a run that was aborted by divergence.
    pub diverged: bool,
}

/// Configuration of one branching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Segment length in epochs, in `[1, 10]`.
    pub n: usize,
    /// Total mainline epochs; must be a multiple of `n` (10n in the standard
    /// protocol, yielding 10 samples).
    pub total_epochs: usize,
    pub lr0: f64,
    pub seed: u64,
    pub task_id: String,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 10 {
            return Err(Error::usage(format!("n must be in [1, 10], got {}", self.n)));
        }
        if self.total_epochs == 0 || self.total_epochs % self.n != 0 {
            return Err(Error::usage(format!(
                "total_epochs {} must be a positive multiple of n {}",
                self.total_epochs, self.n
            )));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(Error::usage(format!("lr0 must be positive, got {}", self.lr0)));
        }
        Ok(())
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Decision whose branch loss is strictly minimal; exact ties break toward
/// Constant, then Decrease. Non-finite losses count as +inf.
pub fn label_from_losses(l_plus: f64, l_one: f64, l_minus: f64) -> LrDecision {
    let losses = BranchLosses { l_plus, l_one, l_minus };
    let mut best = LrDecision::Constant;
    let mut best_loss = f64::INFINITY;
    for d in LrDecision::TIE_ORDER {
        let v = sanitize(losses.get(d));
        if v < best_loss {
            best = d;
            best_loss = v;
        }
    }
    best
}

/// Rank permutation of the three branch losses, ties broken by branch index
/// so the comparison is total.
fn rank_order(losses: &BranchLosses) -> [usize; 3] {
    let vals = [
        sanitize(losses.l_plus),
        sanitize(losses.l_one),
        sanitize(losses.l_minus),
    ];
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap().then(a.cmp(&b)));
    idx
}

/// Re-measure the chosen branch with the follow-up segment's loss. If the
/// loss ordering is unchanged the original label stands; otherwise noise is
/// dominating the LR effect and the label is demoted to Constant.
pub fn correct_label(
    branch_losses: &BranchLosses,
    chosen: LrDecision,
    repeated_loss: f64,
) -> LrDecision {
    let original = label_from_losses(
        branch_losses.l_plus,
        branch_losses.l_one,
        branch_losses.l_minus,
    );
    let mut substituted = *branch_losses;
    substituted.set(chosen, sanitize(repeated_loss));
    if rank_order(branch_losses) == rank_order(&substituted) {
        original
    } else {
        LrDecision::Constant
    }
}

/// Everything a run produces: the labeled samples plus the raw mainline
/// history they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub samples: Vec<Sample>,
    pub history: Vec<HistoryRecord>,
    pub diverged: bool,
}

// Stream tags for the per-segment stochastic streams.
const STREAM_PLUS: u64 = 0;
const STREAM_ONE: u64 = 1;
const STREAM_MINUS: u64 = 2;
const STREAM_MAINLINE: u64 = 3;

/// The branch eliminated in step 6: the max-loss branch, with exact ties
/// broken toward eliminating Increase, then Constant (drop the risky
/// direction first).
fn elimination(losses: &BranchLosses) -> LrDecision {
    let mut worst = LrDecision::Increase;
    let mut worst_loss = f64::NEG_INFINITY;
    for d in [LrDecision::Increase, LrDecision::Constant, LrDecision::Decrease] {
        let v = sanitize(losses.get(d));
        if v > worst_loss {
            worst = d;
            worst_loss = v;
        }
    }
    worst
}

/// Execute the full branch-and-label protocol for one run.
///
/// The trainee must be freshly initialized; `config.seed` keys every
/// stochastic stream of the run. Produces `total_epochs / n` samples unless
/// divergence aborts the run early, in which case the partial samples are
/// retained with their `diverged` flag set.
pub fn run_branching_protocol(
    trainee: &mut dyn Trainee,
    config: &RunConfig,
) -> Result<RunOutput> {
    config.validate()?;
    let segments = config.total_epochs / config.n;
    let n = config.n;
    let mut pick_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, &[u64::MAX]));

    let mut history: Vec<HistoryRecord> = Vec::with_capacity(config.total_epochs);
    let mut samples: Vec<Sample> = Vec::with_capacity(segments);
    let mut lr = config.lr0;
    let mut chosen_prev: Option<LrDecision> = None;
    let mut diverged = false;

    for segment in 0..segments {
        // Mainline: train n epochs at the current LR under this segment's
        // own stream. When segment > 0 this repeats the chosen branch.
        trainee.reseed(derive(config.seed, &[segment as u64, STREAM_MAINLINE]));
        let stats = trainee.train_epochs(&vec![lr; n])?;
        for s in &stats {
            history.push(HistoryRecord {
                epoch_index: history.len(),
                train_loss: s.train_loss,
                val_loss: s.val_loss,
                lr: s.lr,
            });
        }
        let segment_end_loss = stats.last().expect("n >= 1").val_loss;

        // The fresh measurement retroactively corrects the previous sample.
        if let (Some(chosen), Some(prev)) = (chosen_prev, samples.last_mut()) {
            let corrected_label = correct_label(&prev.branch_losses, chosen, segment_end_loss);
            if corrected_label != prev.label {
                prev.label = LrDecision::Constant;
                prev.corrected = true;
            }
        }

        if !segment_end_loss.is_finite()
            || stats.iter().any(|s| !s.train_loss.is_finite() || !s.val_loss.is_finite())
        {
            // Mainline diverged: feature windows can no longer be built.
            diverged = true;
            break;
        }

        // Branch probes, each restored from the same checkpoint under a
        // distinct stream.
        let checkpoint = trainee.snapshot()?;
        let mut losses = BranchLosses { l_plus: f64::NAN, l_one: f64::NAN, l_minus: f64::NAN };
        for (decision, stream) in [
            (LrDecision::Increase, STREAM_PLUS),
            (LrDecision::Constant, STREAM_ONE),
            (LrDecision::Decrease, STREAM_MINUS),
        ] {
            trainee.restore(&checkpoint)?;
            trainee.reseed(derive(config.seed, &[segment as u64, stream]));
            let branch_stats = trainee.train_epochs(&vec![lr * decision.multiplier(); n])?;
            losses.set(decision, branch_stats.last().expect("n >= 1").val_loss);
        }
        trainee.restore(&checkpoint)?;

        let label = label_from_losses(losses.l_plus, losses.l_one, losses.l_minus);
        let window = build_feature_window(&history, n, history.len())?;
        samples.push(Sample {
            window,
            label,
            n,
            segment_index: segment,
            task_id: config.task_id.clone(),
            lr_at_branch: lr,
            branch_losses: losses,
            corrected: false,
            correctable: true,
            diverged: false,
        });

        if segment + 1 == segments {
            break;
        }

        // Step 6: eliminate the worst branch, continue one of the two
        // survivors at random. Survivors that themselves diverged cannot be
        // continued; if none remain the run aborts.
        let eliminated = elimination(&losses);
        let survivors: Vec<LrDecision> = LrDecision::ALL
            .into_iter()
            .filter(|&d| d != eliminated && losses.get(d).is_finite())
            .collect();
        let chosen = match survivors.len() {
            0 => {
                diverged = true;
                break;
            }
            1 => survivors[0],
            _ => survivors[pick_rng.random_range(0..survivors.len())],
        };
        lr *= chosen.multiplier();
        chosen_prev = Some(chosen);
    }

    if let Some(last) = samples.last_mut() {
        last.correctable = false;
    }
    if diverged {
        for s in &mut samples {
            s.diverged = true;
        }
    }
    Ok(RunOutput { samples, history, diverged })
}

/// Per-class sample counts indexed like `LrDecision::index()`.
pub type ClassCounts = [u64; 3];

fn count_classes(samples: &[Sample]) -> ClassCounts {
    let mut counts = [0u64; 3];
    for s in samples {
        counts[s.label.index()] += 1;
    }
    counts
}

/// Per-task generation stats recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub family: String,
    pub min_lr0: f64,
    pub max_lr0: f64,
    pub runs: usize,
    pub samples: u64,
    pub class_counts: ClassCounts,
    pub corrected: u64,
    pub diverged_runs: usize,
}

/// Sidecar manifest written next to the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub runs_per_task: usize,
    pub n_override: Option<usize>,
    pub total_samples: u64,
    pub class_counts: ClassCounts,
    pub tasks: Vec<TaskSummary>,
}

impl DatasetManifest {
    pub const FORMAT: &'static str = "arclr-dataset";
    pub const VERSION: u32 = 1;
}

/// Options for dataset generation beyond the task list.
#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    /// Force every run's segment length instead of drawing n uniformly from
    /// `[1, 10]`.
    pub n_override: Option<usize>,
}

/// Path of the manifest that accompanies `dataset_path`.
pub fn manifest_path(dataset_path: &Path) -> PathBuf {
    dataset_path.with_extension("manifest.json")
}

/// Generate a labeled dataset over `tasks`, `runs_per_task` runs each.
///
/// Every run draws its lr0 log-uniformly from the task's range and its
/// segment length n uniformly from `[1, 10]` (unless overridden), then runs
/// the branching protocol for `10 n` total epochs. Samples append in task
/// order, then run order, then segment order; the same seed always produces
/// a byte-identical dataset file.
pub fn generate_dataset(
    tasks: &[TaskSpec],
    runs_per_task: usize,
    seed: u64,
    options: &GenerateOptions,
    out_path: &Path,
) -> Result<DatasetManifest> {
    if tasks.is_empty() || runs_per_task == 0 {
        return Err(Error::usage("generate_dataset: need at least one task and one run"));
    }
    if let Some(n) = options.n_override {
        if n == 0 || n > 10 {
            return Err(Error::usage(format!("n override must be in [1, 10], got {n}")));
        }
    }
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut writer = std::io::BufWriter::new(fs::File::create(out_path)?);

    let mut summaries = Vec::with_capacity(tasks.len());
    let mut total_counts = [0u64; 3];
    let mut total_samples = 0u64;

    for (task_index, spec) in tasks.iter().enumerate() {
        spec.validate()?;
        let mut task_counts = [0u64; 3];
        let mut task_samples = 0u64;
        let mut corrected = 0u64;
        let mut diverged_runs = 0usize;

        for run_index in 0..runs_per_task {
            let run_seed = derive(seed, &[task_index as u64, run_index as u64]);
            let mut draw_rng = ChaCha8Rng::seed_from_u64(run_seed);
            let n = options.n_override.unwrap_or_else(|| draw_rng.random_range(1..=10));
            let span = spec.max_lr0.ln() - spec.min_lr0.ln();
            let lr0 = (spec.min_lr0.ln() + draw_rng.random::<f64>() * span).exp();

            let config = RunConfig {
                n,
                total_epochs: 10 * n,
                lr0,
                seed: run_seed,
                task_id: spec.task_id.clone(),
            };
            let mut trainee = make_trainee(spec, derive(run_seed, &[7]))?;
            let output = run_branching_protocol(trainee.as_mut(), &config)?;
            if output.diverged {
                diverged_runs += 1;
            }
            for sample in &output.samples {
                let line = serde_json::to_string(sample)?;
                writer.write_all(line.as_bytes())?;
                writer.write_all(b"\n")?;
                if sample.corrected {
                    corrected += 1;
                }
            }
            let counts = count_classes(&output.samples);
            for k in 0..3 {
                task_counts[k] += counts[k];
            }
            task_samples += output.samples.len() as u64;
            log::debug!(
                "task {} run {run_index}: n={n} lr0={lr0:.3e} samples={} diverged={}",
                spec.task_id,
                output.samples.len(),
                output.diverged
            );
        }

        for k in 0..3 {
            total_counts[k] += task_counts[k];
        }
        total_samples += task_samples;
        summaries.push(TaskSummary {
            task_id: spec.task_id.clone(),
            family: spec.family.name().into(),
            min_lr0: spec.min_lr0,
            max_lr0: spec.max_lr0,
            runs: runs_per_task,
            samples: task_samples,
            class_counts: task_counts,
            corrected,
            diverged_runs,
        });
    }
    writer.flush()?;

    let manifest = DatasetManifest {
        format: DatasetManifest::FORMAT.into(),
        version: DatasetManifest::VERSION,
        seed,
        runs_per_task,
        n_override: options.n_override,
        total_samples,
        class_counts: total_counts,
        tasks: summaries,
    };
    fs::write(
        manifest_path(out_path),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Read a dataset file written by [`generate_dataset`].
pub fn read_dataset(path: &Path) -> Result<Vec<Sample>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open dataset {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("dataset line {}: {e}", line_no + 1)))?;
        sample.window.validate()?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::data(format!("dataset {} is empty", path.display())));
    }
    Ok(samples)
}

/// Read a dataset manifest.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot open manifest {}: {e}", path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format != DatasetManifest::FORMAT {
        return Err(Error::data(format!("unexpected manifest format '{}'", manifest.format)));
    }
    if manifest.version != DatasetManifest::VERSION {
        return Err(Error::data(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    Ok(manifest)
}
