//! Configuration-driven experiment grid: run every (task, scheduler, lr0,
//! seed) cell, aggregate per-seed finals into mean/std summaries with
//! median-run traces, and emit paper-style tables and plot series.

pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decision::LrDecision;
use crate::error::{Error, Result};
use crate::net::ControllerWeights;
use crate::sched::{arc_step, invocation_epochs, lr_at, SchedulerConfig};
use crate::seeds::derive;
use crate::signal::HistoryRecord;
use crate::trainee::{find_task, make_trainee, Trainee};

fn default_invocations() -> usize {
    10
}

/// Scheduler template: shape parameters only; the grid supplies lr0 and the
/// horizon at instantiation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerSpec {
    /// Constant baseline LR.
    Blr,
    /// One-cycle cosine decay from lr0 down to `lr_min`.
    Cd {
        #[serde(default)]
        lr_min: f64,
        /// Cosine period; defaults to the grid horizon.
        #[serde(default)]
        horizon_t: Option<usize>,
    },
    /// Cyclic cosine decay with warm restarts.
    Ccd {
        t0: usize,
        t_mult: usize,
        #[serde(default)]
        lr_min: f64,
    },
    /// Exponential decay by `gamma` per epoch.
    Ed { gamma: f64 },
    /// Controller-driven schedule.
    Arc {
        #[serde(default = "default_invocations")]
        invocations: usize,
    },
}

impl SchedulerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            SchedulerSpec::Blr => "blr",
            SchedulerSpec::Cd { .. } => "cd",
            SchedulerSpec::Ccd { .. } => "ccd",
            SchedulerSpec::Ed { .. } => "ed",
            SchedulerSpec::Arc { .. } => "arc",
        }
    }

    pub fn instantiate(&self, lr0: f64, horizon: usize) -> SchedulerConfig {
        match *self {
            SchedulerSpec::Blr => SchedulerConfig::Constant { lr0 },
            SchedulerSpec::Cd { lr_min, horizon_t } => SchedulerConfig::CosineDecay {
                lr_max: lr0,
                lr_min,
                horizon_t: horizon_t.unwrap_or(horizon),
            },
            SchedulerSpec::Ccd { t0, t_mult, lr_min } => {
                SchedulerConfig::CyclicCosine { lr_max: lr0, lr_min, t0, t_mult }
            }
            SchedulerSpec::Ed { gamma } => SchedulerConfig::ExponentialDecay { lr0, gamma },
            SchedulerSpec::Arc { invocations } => SchedulerConfig::ArcControlled {
                lr0,
                invocations,
                weights_ref: String::new(),
            },
        }
    }
}

/// The full experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub task_ids: Vec<String>,
    pub schedulers: Vec<SchedulerSpec>,
    pub lr0_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub horizon: usize,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.task_ids.is_empty()
            || self.schedulers.is_empty()
            || self.lr0_values.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::usage("grid: all lists must be non-empty"));
        }
        if self.horizon == 0 {
            return Err(Error::usage("grid: horizon must be positive"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::usage("grid: seeds must be distinct"));
        }
        if self.lr0_values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::usage("grid: lr0 values must be positive"));
        }
        for t in &self.task_ids {
            find_task(t)?;
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.task_ids.len() * self.schedulers.len() * self.lr0_values.len() * self.seeds.len()
    }
}

/// A decision taken at the end of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub epoch: usize,
    pub decision: LrDecision,
}

/// One executed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task_id: String,
    pub scheduler: String,
    pub lr0: f64,
    pub seed: u64,
    /// Final-epoch validation loss; `None` when the run diverged.
    pub final_loss: Option<f64>,
    pub diverged: bool,
    /// LR in force per epoch, always `horizon` entries.
    pub lr_trace: Vec<f64>,
    /// Validation loss per epoch; `None` past a divergence.
    pub loss_trace: Vec<Option<f64>>,
    pub decisions: Vec<DecisionPoint>,
}

/// Aggregates for one (task, scheduler, lr0) group across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub task_id: String,
    pub scheduler: String,
    pub lr0: f64,
    /// Mean of non-diverged finals; `None` when every seed diverged.
    pub mean: Option<f64>,
    /// Population standard deviation of non-diverged finals.
    pub std: Option<f64>,
    /// Finals in grid seed order; `None` marks a diverged seed.
    pub per_seed: Vec<Option<f64>>,
    pub diverged_count: usize,
    /// Seed of the median run (by final loss, lower index on ties).
    pub median_seed: Option<u64>,
    pub median_lr_trace: Vec<f64>,
    pub median_loss_trace: Vec<Option<f64>>,
    pub median_decisions: Vec<DecisionPoint>,
}

/// Full benchmark output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format: String,
    pub version: u32,
    /// Name of the per-cell final metric.
    pub metric: String,
    /// Orientation used when marking the best cell per column.
    pub higher_is_better: bool,
    pub horizon: usize,
    pub grid: ExperimentGrid,
    pub config_digest: String,
    pub groups: Vec<GroupSummary>,
    pub cells: Vec<CellResult>,
}

impl BenchmarkReport {
    pub const FORMAT: &'static str = "arclr-report";
    pub const VERSION: u32 = 1;
}

struct CellRun {
    lr_trace: Vec<f64>,
    loss_trace: Vec<Option<f64>>,
    decisions: Vec<DecisionPoint>,
    final_loss: Option<f64>,
    diverged: bool,
}

/// Drive one trainee for `horizon` epochs under `config`.
fn run_cell(
    trainee: &mut dyn Trainee,
    config: &SchedulerConfig,
    horizon: usize,
    weights: Option<&ControllerWeights>,
) -> Result<CellRun> {
    config.validate()?;
    let invocations = match config {
        SchedulerConfig::ArcControlled { invocations, .. } => {
            if weights.is_none() {
                return Err(Error::usage(
                    "controller-driven schedule requires controller weights",
                ));
            }
            invocation_epochs(horizon, *invocations)?
        }
        _ => Vec::new(),
    };

    let mut lr = config.initial_lr();
    let mut history: Vec<HistoryRecord> = Vec::with_capacity(horizon);
    let mut lr_trace = Vec::with_capacity(horizon);
    let mut loss_trace = Vec::with_capacity(horizon);
    let mut decisions = Vec::new();
    let mut diverged = false;
    let mut prev_invocation: Option<usize> = None;

    for epoch in 0..horizon {
        let lr_now = if config.is_controller_driven() {
            lr
        } else {
            lr_at(config, epoch, horizon)?
        };
        let stats = trainee.train_epochs(&[lr_now])?;
        let stat = stats[0];
        lr_trace.push(lr_now);
        if !stat.val_loss.is_finite() || !stat.train_loss.is_finite() {
            loss_trace.push(None);
            diverged = true;
            break;
        }
        loss_trace.push(Some(stat.val_loss));
        history.push(HistoryRecord {
            epoch_index: epoch,
            train_loss: stat.train_loss,
            val_loss: stat.val_loss,
            lr: lr_now,
        });

        if let Some(pos) = invocations.iter().position(|&e| e == epoch) {
            let n = match prev_invocation {
                Some(prev) => epoch - prev,
                None => epoch + 1,
            };
            let (new_lr, decision) =
                arc_step(lr_now, &history, n, weights.expect("checked above"))?;
            lr = new_lr;
            decisions.push(DecisionPoint { epoch, decision });
            prev_invocation = Some(epoch);
            let _ = pos;
        }
    }
    // Keep every trace exactly `horizon` long, padding past a divergence.
    while lr_trace.len() < horizon {
        lr_trace.push(*lr_trace.last().expect("horizon >= 1"));
    }
    while loss_trace.len() < horizon {
        loss_trace.push(None);
    }
    let final_loss = *loss_trace.last().expect("horizon >= 1");
    Ok(CellRun { lr_trace, loss_trace, decisions, final_loss, diverged })
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

fn summarize(
    grid: &ExperimentGrid,
    cells: &[CellResult],
    task_id: &str,
    scheduler: &str,
    lr0: f64,
) -> GroupSummary {
    let group: Vec<&CellResult> = grid
        .seeds
        .iter()
        .map(|&seed| {
            cells
                .iter()
                .find(|c| {
                    c.task_id == task_id
                        && c.scheduler == scheduler
                        && c.lr0 == lr0
                        && c.seed == seed
                })
                .expect("cell exists for every seed")
        })
        .collect();

    let per_seed: Vec<Option<f64>> = group.iter().map(|c| c.final_loss).collect();
    let finite: Vec<(usize, f64)> = per_seed
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let diverged_count = per_seed.len() - finite.len();

    let (mean, std) = if finite.is_empty() {
        (None, None)
    } else {
        let vals: Vec<f64> = finite.iter().map(|&(_, v)| v).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        (Some(mean), Some(population_std(&vals, mean)))
    };

    // Median run: middle element after sorting by (final, seed index); even
    // counts take the lower middle.
    let median = if finite.is_empty() {
        None
    } else {
        let mut sorted = finite.clone();
        sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        Some(sorted[(sorted.len() - 1) / 2].0)
    };

    let (median_seed, median_lr_trace, median_loss_trace, median_decisions) = match median {
        Some(i) => (
            Some(group[i].seed),
            group[i].lr_trace.clone(),
            group[i].loss_trace.clone(),
            group[i].decisions.clone(),
        ),
        None => (None, Vec::new(), Vec::new(), Vec::new()),
    };

    GroupSummary {
        task_id: task_id.into(),
        scheduler: scheduler.into(),
        lr0,
        mean,
        std,
        per_seed,
        diverged_count,
        median_seed,
        median_lr_trace,
        median_loss_trace,
        median_decisions,
    }
}

/// Execute every cell of the grid. Deterministic: cell order is fixed by
/// (task, scheduler, lr0, seed) nesting and every trainee is seeded from its
/// (task, seed) pair alone, so schedulers compete on identical trainees.
pub fn run_grid(
    grid: &ExperimentGrid,
    weights: Option<&ControllerWeights>,
) -> Result<BenchmarkReport> {
    grid.validate()?;
    let needs_weights = grid
        .schedulers
        .iter()
        .any(|s| matches!(s, SchedulerSpec::Arc { .. }));
    if needs_weights && weights.is_none() {
        return Err(Error::usage("grid contains the controller-driven schedule but no weights were provided"));
    }

    let digest = {
        let canonical = serde_json::to_string(grid)?;
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    };

    let mut cells = Vec::with_capacity(grid.cell_count());
    for (task_index, task_id) in grid.task_ids.iter().enumerate() {
        let spec = find_task(task_id)?;
        for sched in &grid.schedulers {
            for &lr0 in &grid.lr0_values {
                for &seed in &grid.seeds {
                    let config = sched.instantiate(lr0, grid.horizon);
                    let init_seed = derive(seed, &[task_index as u64, 17]);
                    let mut trainee = make_trainee(&spec, init_seed)?;
                    let run = run_cell(trainee.as_mut(), &config, grid.horizon, weights)?;
                    log::debug!(
                        "cell {task_id}/{}/lr0={lr0:e}/seed={seed}: final={:?} diverged={}",
                        sched.label(),
                        run.final_loss,
                        run.diverged
                    );
                    cells.push(CellResult {
                        task_id: task_id.clone(),
                        scheduler: sched.label().into(),
                        lr0,
                        seed,
                        final_loss: run.final_loss,
                        diverged: run.diverged,
                        lr_trace: run.lr_trace,
                        loss_trace: run.loss_trace,
                        decisions: run.decisions,
                    });
                }
            }
        }
    }

    let mut groups = Vec::new();
    for task_id in &grid.task_ids {
        for sched in &grid.schedulers {
            for &lr0 in &grid.lr0_values {
                groups.push(summarize(grid, &cells, task_id, sched.label(), lr0));
            }
        }
    }

    Ok(BenchmarkReport {
        format: BenchmarkReport::FORMAT.into(),
        version: BenchmarkReport::VERSION,
        metric: "final_val_loss".into(),
        higher_is_better: false,
        horizon: grid.horizon,
        grid: grid.clone(),
        config_digest: digest,
        groups,
        cells,
    })
}

pub fn save_report(report: &BenchmarkReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<BenchmarkReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot open report {}: {e}", path.display())))?;
    let report: BenchmarkReport = serde_json::from_str(&text)?;
    if report.format != BenchmarkReport::FORMAT {
        return Err(Error::data(format!("unexpected report format '{}'", report.format)));
    }
    if report.version != BenchmarkReport::VERSION {
        return Err(Error::data(format!("unsupported report version {}", report.version)));
    }
    Ok(report)
}

/// Output format of the per-task tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// "mean ± std" with one decimal, mirroring the reference table style.
fn format_cell(summary: &GroupSummary, total_seeds: usize) -> String {
    match (summary.mean, summary.std) {
        (Some(mean), Some(std)) => {
            let mut cell = format!("{mean:.1} ± {std:.1}");
            if summary.diverged_count > 0 {
                cell.push_str(&format!(
                    " ({}/{} diverged)",
                    summary.diverged_count, total_seeds
                ));
            }
            cell
        }
        _ => "diverged".into(),
    }
}

fn lr0_slug(lr0: f64) -> String {
    format!("{lr0:e}")
}

/// Emit one table per task: rows are schedulers, columns lr0 values, cells
/// "mean ± std" with the best cell per column marked (all of them on ties).
/// Markdown marks with bold, CSV with a leading `*`.
pub fn emit_tables(
    report: &BenchmarkReport,
    dir: &Path,
    format: TableFormat,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let grid = &report.grid;
    let mut paths = Vec::new();
    for task_id in &grid.task_ids {
        // Best mean per lr0 column.
        let mut best: Vec<Option<f64>> = vec![None; grid.lr0_values.len()];
        for (col, &lr0) in grid.lr0_values.iter().enumerate() {
            for sched in &grid.schedulers {
                let g = report
                    .groups
                    .iter()
                    .find(|g| g.task_id == *task_id && g.scheduler == sched.label() && g.lr0 == lr0)
                    .expect("summary exists");
                if let Some(mean) = g.mean {
                    best[col] = Some(match best[col] {
                        None => mean,
                        Some(b) => {
                            if report.higher_is_better {
                                b.max(mean)
                            } else {
                                b.min(mean)
                            }
                        }
                    });
                }
            }
        }

        let mut out = String::new();
        let headers: Vec<String> = grid.lr0_values.iter().map(|v| format!("lr0={v:e}")).collect();
        match format {
            TableFormat::Csv => {
                out.push_str(&format!("scheduler,{}\n", headers.join(",")));
            }
            TableFormat::Markdown => {
                out.push_str(&format!(
                    "# {task_id}: {} over {} seeds\n\n",
                    report.metric,
                    grid.seeds.len()
                ));
                out.push_str(&format!("| scheduler | {} |\n", headers.join(" | ")));
                out.push_str(&format!("|---|{}\n", "---|".repeat(headers.len())));
            }
        }
        for sched in &grid.schedulers {
            let mut row: Vec<String> = vec![sched.label().into()];
            for (col, &lr0) in grid.lr0_values.iter().enumerate() {
                let g = report
                    .groups
                    .iter()
                    .find(|g| g.task_id == *task_id && g.scheduler == sched.label() && g.lr0 == lr0)
                    .expect("summary exists");
                let mut cell = format_cell(g, grid.seeds.len());
                if let (Some(mean), Some(best_mean)) = (g.mean, best[col]) {
                    if mean == best_mean {
                        cell = match format {
                            TableFormat::Csv => format!("*{cell}"),
                            TableFormat::Markdown => format!("**{cell}**"),
                        };
                    }
                }
                row.push(cell);
            }
            match format {
                TableFormat::Csv => out.push_str(&format!("{}\n", row.join(","))),
                TableFormat::Markdown => out.push_str(&format!("| {} |\n", row.join(" | "))),
            }
        }

        let ext = match format {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        };
        let path = dir.join(format!("table_{task_id}.{ext}"));
        fs::write(&path, out)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Emit per-(task, lr0) median-run series: a plot-ready CSV plus a rendered
/// two-panel SVG (LR on a log axis, metric linear), one series per
/// scheduler.
pub fn emit_plots(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let grid = &report.grid;
    let mut paths = Vec::new();
    for task_id in &grid.task_ids {
        for &lr0 in &grid.lr0_values {
            let groups: Vec<&GroupSummary> = grid
                .schedulers
                .iter()
                .map(|s| {
                    report
                        .groups
                        .iter()
                        .find(|g| {
                            g.task_id == *task_id && g.scheduler == s.label() && g.lr0 == lr0
                        })
                        .expect("summary exists")
                })
                .collect();

            // Plot-ready tabular series.
            let mut csv = String::from("epoch");
            for g in &groups {
                csv.push_str(&format!(",{}_lr,{}_loss", g.scheduler, g.scheduler));
            }
            csv.push('\n');
            for epoch in 0..report.horizon {
                csv.push_str(&epoch.to_string());
                for g in &groups {
                    match g.median_lr_trace.get(epoch) {
                        Some(lr) => csv.push_str(&format!(",{lr:e}")),
                        None => csv.push(','),
                    }
                    match g.median_loss_trace.get(epoch).copied().flatten() {
                        Some(loss) => csv.push_str(&format!(",{loss:e}")),
                        None => csv.push(','),
                    }
                }
                csv.push('\n');
            }
            let csv_path = dir.join(format!("traces_{task_id}_{}.csv", lr0_slug(lr0)));
            fs::write(&csv_path, csv)?;
            paths.push(csv_path);

            // Rendered chart.
            let mk_series = |value: &dyn Fn(&GroupSummary, usize) -> Option<f64>| {
                groups
                    .iter()
                    .enumerate()
                    .map(|(i, g)| svg::Series {
                        label: g.scheduler.clone(),
                        color: svg::PALETTE[i % svg::PALETTE.len()],
                        points: (0..report.horizon)
                            .map(|e| (e as f64, value(g, e)))
                            .collect(),
                    })
                    .collect::<Vec<_>>()
            };
            let top = svg::Panel {
                y_label: "learning rate".into(),
                log_y: true,
                series: mk_series(&|g, e| g.median_lr_trace.get(e).copied()),
            };
            let bottom = svg::Panel {
                y_label: report.metric.clone(),
                log_y: false,
                series: mk_series(&|g, e| g.median_loss_trace.get(e).copied().flatten()),
            };
            let chart = svg::two_panel_chart(
                &format!("{task_id} @ lr0={lr0:e} (median runs)"),
                "epoch",
                (report.horizon.saturating_sub(1)) as f64,
                &top,
                &bottom,
            );
            let svg_path = dir.join(format!("plot_{task_id}_{}.svg", lr0_slug(lr0)));
            fs::write(&svg_path, chart)?;
            paths.push(svg_path);
        }
    }
    Ok(paths)
}
