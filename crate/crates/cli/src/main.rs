//! Command-line surface for the LR-controller pipeline: generate labeled
//! data from branching runs, train the controller, evaluate it, benchmark it
//! against standard schedules, and inspect the artifacts.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use arclr_core::bench::{emit_plots, emit_tables, load_report, run_grid, save_report, ExperimentGrid, SchedulerSpec, TableFormat};
use arclr_core::datagen::{generate_dataset, manifest_path, read_dataset, read_manifest, GenerateOptions};
use arclr_core::net::io::{load_weights, save_weights};
use arclr_core::net::{
    evaluate_subset, split_indices, train_controller, weighted_accuracy, ConfusionMatrix,
    RewardPenaltyMatrix, TrainConfig,
};
use arclr_core::seeds::derive;
use arclr_core::trainee::find_task;
use arclr_core::{Error, LrDecision, Result};

#[derive(Parser)]
#[command(name = "arclr", version, about = "Autonomous LR-controller pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the branch-and-label protocol over trainee tasks and write a
    /// labeled dataset (JSONL plus manifest).
    GenerateData {
        /// Config file with a [datagen] section.
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output dataset path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override runs per task.
        #[arg(long)]
        runs_per_task: Option<usize>,
        /// Force the segment length n for every run.
        #[arg(long)]
        n: Option<usize>,
        /// Override the task list (comma separated ids).
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
    },
    /// Train the controller on a generated dataset and save the best
    /// weights by validation weighted accuracy.
    TrainController {
        /// Config file with a [controller] section.
        #[arg(long)]
        config: PathBuf,
        /// Override the dataset path.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Override the weights output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Weighted accuracy and confusion matrix of saved weights on a dataset
    /// split.
    Evaluate {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Which side of the train/validation split to score.
        #[arg(long, value_enum, default_value_t = SplitChoice::All)]
        split: SplitChoice,
        /// Split seed; must match the training seed to reproduce its split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train fraction used when splitting.
        #[arg(long, default_value_t = 0.7)]
        split_ratio: f64,
    },
    /// Run the experiment grid and emit the report, tables, traces, and
    /// plots.
    Benchmark {
        /// Config file with a [benchmark] section.
        #[arg(long)]
        config: PathBuf,
        /// Override the controller weights path.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Re-key the whole grid: seed i becomes derive(seed, i), keeping
        /// the configured number of repetitions.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a summary of a dataset, manifest, weights, or report file.
    Inspect { path: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Train,
    Val,
    All,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Usage(_) => 2,
        Error::Data(_) => 3,
        Error::Numeric(_) => 4,
        Error::Io(_) | Error::Json(_) => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenerateData { config, seed, out, runs_per_task, n, tasks } => {
            cmd_generate(&config, seed, out, runs_per_task, n, tasks)
        }
        Command::TrainController { config, data, out, seed, epochs } => {
            cmd_train(&config, data, out, seed, epochs)
        }
        Command::Evaluate { weights, data, split, seed, split_ratio } => {
            cmd_evaluate(&weights, &data, split, seed, split_ratio)
        }
        Command::Benchmark { config, weights, out_dir, seed } => {
            cmd_benchmark(&config, weights, out_dir, seed)
        }
        Command::Inspect { path } => cmd_inspect(&path),
    }
}

fn cmd_generate(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    runs_per_task: Option<usize>,
    n: Option<usize>,
    tasks: Option<Vec<String>>,
) -> Result<()> {
    let config = config::load_config(config_path)?;
    let section = config.datagen()?;
    let task_ids = tasks.as_ref().unwrap_or(&section.tasks);
    let specs = task_ids
        .iter()
        .map(|id| find_task(id))
        .collect::<Result<Vec<_>>>()?;
    let seed = seed.unwrap_or(section.seed);
    let out = out.unwrap_or_else(|| section.out.clone());
    let options = GenerateOptions { n_override: n.or(section.n) };

    let manifest = generate_dataset(
        &specs,
        runs_per_task.unwrap_or(section.runs_per_task),
        seed,
        &options,
        &out,
    )?;

    println!("dataset: {}", out.display());
    println!("manifest: {}", manifest_path(&out).display());
    println!("samples: {}", manifest.total_samples);
    println!(
        "class balance: decrease {} constant {} increase {}",
        manifest.class_counts[0], manifest.class_counts[1], manifest.class_counts[2]
    );
    for t in &manifest.tasks {
        println!(
            "  {}: {} samples over {} runs ({} corrected, {} diverged runs)",
            t.task_id, t.samples, t.runs, t.corrected, t.diverged_runs
        );
    }
    Ok(())
}

fn cmd_train(
    config_path: &Path,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> Result<()> {
    let config = config::load_config(config_path)?;
    let section = config.controller()?;
    let data_path = data.unwrap_or_else(|| section.data.clone());
    let out_path = out.unwrap_or_else(|| section.out.clone());

    let mut train_config = TrainConfig { seed: seed.unwrap_or(section.seed), ..TrainConfig::default() };
    if let Some(v) = section.epochs {
        train_config.epochs = v;
    }
    if let Some(v) = epochs {
        train_config.epochs = v;
    }
    if let Some(v) = section.lr {
        train_config.lr = v;
    }
    if let Some(v) = section.beta1 {
        train_config.beta1 = v;
    }
    if let Some(v) = section.beta2 {
        train_config.beta2 = v;
    }
    if let Some(v) = section.batch_size {
        train_config.batch_size = v;
    }
    if let Some(v) = section.split {
        train_config.split = v;
    }

    let dataset = read_dataset(&data_path)?;
    println!("loaded {} samples from {}", dataset.len(), data_path.display());
    let outcome = train_controller(&dataset, &train_config)?;
    save_weights(&outcome.weights, &out_path)?;

    let curve_path = out_path.with_extension("curve.csv");
    let mut curve = String::from("epoch,train_loss,val_wacc\n");
    for p in &outcome.curve {
        curve.push_str(&format!("{},{:e},{:e}\n", p.epoch, p.train_loss, p.val_wacc));
    }
    std::fs::write(&curve_path, curve)?;

    println!("weights: {}", out_path.display());
    println!("curve: {}", curve_path.display());
    println!(
        "split: {} train / {} val",
        outcome.train_count, outcome.val_count
    );
    println!("best epoch: {}", outcome.best_epoch);
    println!("best val weighted_accuracy: {:.6}", outcome.best_wacc);
    Ok(())
}

/// Weighted accuracy of the constant predictor that always answers the most
/// frequent class of `labels`.
fn majority_baseline(labels: &[LrDecision]) -> Result<(LrDecision, f64)> {
    let mut counts = [0u64; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    let majority = LrDecision::ALL
        .into_iter()
        .max_by_key(|d| counts[d.index()])
        .unwrap();
    let mut cm = ConfusionMatrix::new();
    for l in labels {
        cm.record(majority, *l);
    }
    Ok((majority, weighted_accuracy(&cm, &RewardPenaltyMatrix::default())?))
}

fn cmd_evaluate(
    weights_path: &Path,
    data_path: &Path,
    split: SplitChoice,
    seed: u64,
    split_ratio: f64,
) -> Result<()> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::usage("split-ratio must be in (0, 1)"));
    }
    let weights = load_weights(weights_path)?;
    let dataset = read_dataset(data_path)?;
    let (train_idx, val_idx) = split_indices(dataset.len(), split_ratio, seed);
    let idx: Vec<usize> = match split {
        SplitChoice::Train => train_idx,
        SplitChoice::Val => val_idx,
        SplitChoice::All => (0..dataset.len()).collect(),
    };
    let (cm, wacc) = evaluate_subset(&weights, &dataset, &idx)?;
    let labels: Vec<LrDecision> = idx.iter().map(|&i| dataset[i].label).collect();
    let (majority, baseline) = majority_baseline(&labels)?;

    println!("samples: {}", idx.len());
    println!("confusion matrix (rows predicted, columns actual):");
    print!("{cm}");
    println!("accuracy: {:.6}", cm.accuracy());
    println!("weighted_accuracy: {wacc:.6}");
    println!("majority_baseline ({majority}): {baseline:.6}");
    Ok(())
}

fn cmd_benchmark(
    config_path: &Path,
    weights: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let config = config::load_config(config_path)?;
    let section = config.benchmark()?;
    let out_dir = out_dir.unwrap_or_else(|| section.out_dir.clone());

    let seeds = match seed {
        Some(base) => (0..section.seeds.len() as u64).map(|i| derive(base, &[i])).collect(),
        None => section.seeds.clone(),
    };
    let grid = ExperimentGrid {
        task_ids: section.tasks.clone(),
        schedulers: section.schedulers.clone(),
        lr0_values: section.lr0.clone(),
        seeds,
        horizon: section.horizon,
    };

    let needs_weights = grid
        .schedulers
        .iter()
        .any(|s| matches!(s, SchedulerSpec::Arc { .. }));
    let weights_path = weights.or_else(|| section.weights.clone());
    let controller = match (&weights_path, needs_weights) {
        (Some(path), _) => Some(load_weights(path)?),
        (None, true) => {
            return Err(Error::usage(
                "benchmark uses the controller-driven schedule but no weights were given",
            ))
        }
        (None, false) => None,
    };

    println!("running {} cells...", grid.cell_count());
    let report = run_grid(&grid, controller.as_ref())?;

    let report_path = out_dir.join("report.json");
    save_report(&report, &report_path)?;
    let mut written = vec![report_path];
    written.extend(emit_tables(&report, &out_dir, TableFormat::Csv)?);
    written.extend(emit_tables(&report, &out_dir, TableFormat::Markdown)?);
    written.extend(emit_plots(&report, &out_dir)?);

    for g in &report.groups {
        let cell = match (g.mean, g.std) {
            (Some(m), Some(s)) => format!("{m:.6e} ± {s:.6e}"),
            _ => "diverged".into(),
        };
        println!(
            "  {} / {} / lr0={:e}: {} ({} diverged)",
            g.task_id, g.scheduler, g.lr0, cell, g.diverged_count
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::usage(format!("{} does not exist", path.display())));
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name.ends_with(".jsonl") {
        let samples = read_dataset(path)?;
        let mut counts = [0u64; 3];
        let mut corrected = 0u64;
        let mut diverged = 0u64;
        for s in &samples {
            counts[s.label.index()] += 1;
            corrected += s.corrected as u64;
            diverged += s.diverged as u64;
        }
        println!("dataset: {}", path.display());
        println!("samples: {}", samples.len());
        println!(
            "class balance: decrease {} constant {} increase {}",
            counts[0], counts[1], counts[2]
        );
        println!("corrected: {corrected}");
        println!("from diverged runs: {diverged}");
        return Ok(());
    }

    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{} is not JSON: {e}", path.display())))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some("arclr-dataset") => {
            let manifest = read_manifest(path)?;
            println!("dataset manifest (version {})", manifest.version);
            println!("seed: {}", manifest.seed);
            println!("samples: {}", manifest.total_samples);
            println!(
                "class balance: decrease {} constant {} increase {}",
                manifest.class_counts[0], manifest.class_counts[1], manifest.class_counts[2]
            );
            for t in &manifest.tasks {
                println!(
                    "  {} ({}): {} samples, lr0 in [{:e}, {:e}], {} diverged runs",
                    t.task_id, t.family, t.samples, t.min_lr0, t.max_lr0, t.diverged_runs
                );
            }
        }
        Some("arclr-weights") => {
            let weights = load_weights(path)?;
            println!("controller weights (seed {})", weights.seed());
            println!("parameters: {}", weights.param_count());
            let arch = weights.arch();
            println!(
                "architecture: conv {}x{}s{} -> conv {}x{}s{} -> lstm {} -> lstm {} -> dense {} -> dense 3",
                arch.conv1_out, arch.conv1_kernel, arch.conv1_stride,
                arch.conv2_out, arch.conv2_kernel, arch.conv2_stride,
                arch.hidden, arch.hidden, arch.dense1_out
            );
        }
        Some("arclr-report") => {
            let report = load_report(path)?;
            println!("benchmark report (version {})", report.version);
            println!("metric: {}", report.metric);
            println!("config digest: {}", report.config_digest);
            println!(
                "grid: {} tasks x {} schedulers x {} lr0 x {} seeds, horizon {}",
                report.grid.task_ids.len(),
                report.grid.schedulers.len(),
                report.grid.lr0_values.len(),
                report.grid.seeds.len(),
                report.horizon
            );
            println!("cells: {}", report.cells.len());
        }
        other => {
            return Err(Error::data(format!(
                "unrecognized file format {:?} in {}",
                other,
                path.display()
            )));
        }
    }
    Ok(())
}
