use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use mgrpo_core::checkpoint::write_policy;
use mgrpo_core::env::generate_tasks;
use mgrpo_core::metrics::{write_jsonl_row, MetricsLog, StepMetrics};
use mgrpo_core::trainer::{run_training, Mode, RunObserver, TrainState};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{now, RunManifest, RunPaths, RunStatus};
use crate::svg::{Chart, Series};

/// Streams metrics to disk as they arrive and writes periodic checkpoints.
struct RunWriter<'a> {
    dir: &'a Path,
    jsonl: BufWriter<File>,
    log: MetricsLog,
    checkpoint_interval: usize,
    checkpoints: Vec<String>,
}

impl RunObserver for RunWriter<'_> {
    fn on_metrics(&mut self, row: &StepMetrics) -> mgrpo_core::Result<()> {
        write_jsonl_row(row, &mut self.jsonl)?;
        self.jsonl.flush()?;
        self.log.push(row.clone());
        Ok(())
    }

    fn on_step_end(&mut self, state: &TrainState) -> mgrpo_core::Result<()> {
        if self.checkpoint_interval > 0 && state.step.is_multiple_of(self.checkpoint_interval) {
            let name = format!("checkpoints/step-{:06}.policy", state.step);
            write_policy(&state.current, BufWriter::new(File::create(self.dir.join(&name))?))?;
            self.checkpoints.push(name);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub log: MetricsLog,
}

fn write_csv(log: &MetricsLog, path: &Path) -> anyhow::Result<()> {
    log.write_csv(BufWriter::new(File::create(path)?))?;
    Ok(())
}

/// Trains one configuration into `out/<run id>/`.
///
/// On a mid-run failure the metrics written so far stay on disk and the
/// manifest is marked failed.
pub fn train_run(config: &ExperimentConfig, out: &Path) -> Result<RunRecord, CliError> {
    config.validate()?;
    let mut manifest = RunManifest::start(config);
    let dir = out.join(&manifest.run_id);
    let setup = || -> anyhow::Result<()> {
        fs::create_dir_all(dir.join("checkpoints")).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(&manifest.paths.config), config.to_toml())?;
        manifest.write(&dir)?;
        Ok(())
    };
    setup()?;

    let (tasks, initial) = generate_tasks(&config.env, config.train.seed).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(dir.join(&manifest.paths.tasks), tasks.to_json().map_err(anyhow::Error::from)?)
        .context("writing task set")?;

    let jsonl = File::create(dir.join(&manifest.paths.metrics_jsonl)).context("creating metrics log")?;
    let mut writer = RunWriter {
        dir: &dir,
        jsonl: BufWriter::new(jsonl),
        log: MetricsLog::default(),
        checkpoint_interval: config.output.checkpoint_interval,
        checkpoints: Vec::new(),
    };
    let result = run_training(&config.train, &tasks, &initial, &mut writer);
    write_csv(&writer.log, &dir.join(&manifest.paths.metrics_csv))?;
    manifest.paths = RunPaths {
        checkpoints: std::mem::take(&mut writer.checkpoints),
        ..manifest.paths
    };
    manifest.finished_at = Some(now());
    let log = std::mem::take(&mut writer.log);

    match result {
        Ok(output) => {
            let path = dir.join(&manifest.paths.final_checkpoint);
            write_policy(&output.state.current, BufWriter::new(File::create(path)?)).map_err(anyhow::Error::from)?;
            manifest.status = RunStatus::Completed;
            manifest.write(&dir).context("writing manifest")?;
            Ok(RunRecord { dir, manifest, log })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.write(&dir).context("writing manifest")?;
            Err(CliError::Runtime(anyhow::Error::from(e).context(format!("run {} failed", dir.display()))))
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

/// Per-seed headline numbers of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub run_dir: String,
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub final_self_reward: f64,
    pub final_entropy: f64,
}

impl RunSummary {
    pub fn from_log(seed: u64, run_dir: String, log: &MetricsLog) -> Self {
        let last = |f: fn(&StepMetrics) -> Option<f64>| log.series(f).last().map_or(f64::NAN, |p| p.1);
        Self {
            seed,
            run_dir,
            final_accuracy: last(|r| r.true_accuracy),
            best_accuracy: log
                .series(|r| r.true_accuracy)
                .iter()
                .map(|p| p.1)
                .fold(f64::NAN, f64::max),
            final_self_reward: last(|r| r.mean_self_reward),
            final_entropy: last(|r| r.mean_policy_entropy),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub runs: Vec<RunSummary>,
    pub final_accuracy: Stat,
    pub best_accuracy: Stat,
    pub final_self_reward: Stat,
    pub final_entropy: Stat,
}

impl ModeSummary {
    pub fn new(mode: Mode, runs: Vec<RunSummary>) -> Self {
        let col = |f: fn(&RunSummary) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            mode,
            final_accuracy: col(|r| r.final_accuracy),
            best_accuracy: col(|r| r.best_accuracy),
            final_self_reward: col(|r| r.final_self_reward),
            final_entropy: col(|r| r.final_entropy),
            runs,
        }
    }
}

pub fn summary_table(summaries: &[ModeSummary]) -> String {
    let cell = |s: &Stat| format!("{:.4} ± {:.4}", s.mean, s.std);
    let mut out = String::from(
        "| mode | seeds | final true_accuracy | best true_accuracy | final self-reward | final entropy |\n\
         |---|---|---|---|---|---|\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            s.mode,
            s.runs.len(),
            cell(&s.final_accuracy),
            cell(&s.best_accuracy),
            cell(&s.final_self_reward),
            cell(&s.final_entropy)
        ));
    }
    out
}

/// Runs every (mode, seed) cell; the task set of a cell depends on its seed only.
pub fn compare(base: &ExperimentConfig, modes: &[Mode], seeds: &[u64], out: &Path) -> Result<Vec<ModeSummary>, CliError> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("compare needs at least one mode and one seed".into()));
    }
    let runs_dir = out.join("runs");
    let mut summaries = Vec::new();
    for &mode in modes {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut config = base.clone();
            config.train.mode = mode;
            config.train.seed = seed;
            let record = train_run(&config, &runs_dir)?;
            eprintln!("{mode} seed {seed}: {}", record.dir.display());
            let rel = record.dir.strip_prefix(out).unwrap_or(&record.dir).display().to_string();
            runs.push(RunSummary::from_log(seed, rel, &record.log));
        }
        summaries.push(ModeSummary::new(mode, runs));
    }
    let table = summary_table(&summaries);
    fs::write(out.join("summary.md"), &table).context("writing summary table")?;
    let json = serde_json::to_string_pretty(&summaries).context("serializing summary")?;
    fs::write(out.join("summary.json"), json + "\n").context("writing summary")?;
    print!("{table}");
    Ok(summaries)
}

/// Chart file name, title and metric accessor for each report chart.
type ChartSpec = (&'static str, &'static str, fn(&StepMetrics) -> Option<f64>);

pub const CHARTS: [ChartSpec; 4] = [
    ("self_reward.svg", "Mean self-reward", |r| r.mean_self_reward),
    ("true_accuracy.svg", "True accuracy", |r| r.true_accuracy),
    ("mean_entropy.svg", "Mean policy entropy", |r| r.mean_policy_entropy),
    ("filtered_fraction.svg", "Filtered fraction", |r| r.filtered_fraction),
];

/// Writes the four report charts for `runs` into `out`; returns the number
/// of corrupt metrics lines that were skipped.
pub fn report(runs: &[PathBuf], out: &Path) -> Result<usize, CliError> {
    if runs.is_empty() {
        return Err(CliError::Usage("report needs at least one run directory".into()));
    }
    let mut loaded = Vec::new();
    let mut skipped = 0;
    for dir in runs {
        let path = dir.join("metrics.jsonl");
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let parsed = MetricsLog::read_jsonl(BufReader::new(file)).map_err(anyhow::Error::from)?;
        if !parsed.bad_lines.is_empty() {
            eprintln!(
                "warning: {}: skipped {} corrupt line(s): {:?}",
                path.display(),
                parsed.bad_lines.len(),
                parsed.bad_lines
            );
            skipped += parsed.bad_lines.len();
        }
        let label = match RunManifest::read(dir).ok().and_then(|m| m.config().ok()) {
            Some(c) => format!("{} seed {}", c.train.mode, c.train.seed),
            None => dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        };
        loaded.push((label, parsed.log));
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (file, title, field) in CHARTS {
        let chart = Chart {
            title: title.into(),
            x_label: "step".into(),
            y_label: title.into(),
            series: loaded
                .iter()
                .map(|(label, log)| Series {
                    label: label.clone(),
                    points: log.series(field).into_iter().map(|(s, v)| (s as f64, v)).collect(),
                })
                .collect(),
        };
        fs::write(out.join(file), chart.render()).with_context(|| format!("writing {file}"))?;
    }
    if skipped > 0 {
        eprintln!("warning: {skipped} corrupt metrics line(s) skipped in total");
    }
    Ok(skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn run_summary_picks_last_and_best() {
        let row = |step, acc: Option<f64>, rew: Option<f64>| StepMetrics {
            step,
            true_accuracy: acc,
            mean_self_reward: rew,
            mean_policy_entropy: rew.map(|r| 2.0 - r),
            ..StepMetrics::default()
        };
        let log = MetricsLog {
            rows: vec![row(0, Some(0.2), None), row(1, None, Some(0.5)), row(2, Some(0.6), Some(0.7)), row(3, Some(0.4), Some(0.9))],
        };
        let s = RunSummary::from_log(1, "x".into(), &log);
        assert_eq!((s.final_accuracy, s.best_accuracy, s.final_self_reward), (0.4, 0.6, 0.9));
        assert!((s.final_entropy - 1.1).abs() < 1e-15);
    }
}
