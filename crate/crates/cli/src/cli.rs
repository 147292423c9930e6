use std::path::PathBuf;

use clap::{Parser, Subcommand};
use mgrpo_core::trainer::Mode;

use crate::commands;
use crate::config::{ExperimentConfig, Override};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mgrpo-lab",
    version,
    about = "Self-training experiments on tabular policies",
    after_help = "Any other `--section.key value` flag overrides a config field, e.g. \
                  `--train.learning_rate 0.1` or `--env.num_prompts 50`. A bare \
                  `--some-key value` is shorthand for `--train.some_key value`."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train every (mode, seed) pair and summarize.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated modes; all three when omitted.
        #[arg(long = "mode", alias = "modes", value_delimiter = ',')]
        modes: Vec<String>,
        /// Comma-separated seeds or inclusive ranges, e.g. `1..5` or `1,4,9`.
        #[arg(long = "seed", alias = "seeds", value_delimiter = ',')]
        seeds: Vec<String>,
    },
    /// Draw SVG charts from run directories.
    Report {
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

const KNOWN_FLAGS: [&str; 8] = ["--config", "--out", "--seed", "--seeds", "--mode", "--modes", "--help", "--version"];

/// Separates config overrides from the flags clap understands.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<Override>), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let (flag, inline) = match arg.split_once('=') {
            Some((f, v)) if f.starts_with("--") => (f.to_string(), Some(v.to_string())),
            _ => (arg.clone(), None),
        };
        if !flag.starts_with("--") || flag == "--" || KNOWN_FLAGS.contains(&flag.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => iter
                .next()
                .ok_or_else(|| CliError::Usage(format!("override {flag} is missing a value")))?,
        };
        overrides.push(Override::new(&flag, &value));
    }
    Ok((rest, overrides))
}

fn parse_mode(name: &str) -> Result<Mode, CliError> {
    name.parse().map_err(|e: mgrpo_core::Error| CliError::Usage(e.to_string()))
}

/// Expands `1..5` (inclusive) and plain integers.
pub fn parse_seeds(items: &[String]) -> Result<Vec<u64>, CliError> {
    let bad = |s: &str| CliError::Usage(format!("invalid seed `{s}`"));
    let mut seeds = Vec::new();
    for item in items {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad(item))?, b.trim().parse().map_err(|_| bad(item))?);
                if a > b {
                    return Err(bad(item));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(item.trim().parse().map_err(|_| bad(item))?),
        }
    }
    Ok(seeds)
}

fn load(common: &Common, overrides: &[Override]) -> Result<ExperimentConfig, CliError> {
    let base = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    base.with_overrides(overrides)
}

/// Parses `args` (without the program name) and runs the command.
pub fn run(args: Vec<String>) -> Result<(), CliError> {
    let (rest, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(std::iter::once("mgrpo-lab".to_string()).chain(rest)) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    match cli.command {
        Command::Train { common, seed, mode } => {
            let mut config = load(&common, &overrides)?;
            if let Some(seed) = seed {
                config.train.seed = seed;
            }
            if let Some(mode) = mode {
                config.train.mode = parse_mode(&mode)?;
            }
            let record = commands::train_run(&config, &common.out)?;
            let last_acc = record.log.series(|r| r.true_accuracy).last().map(|p| p.1);
            println!("{}", record.dir.display());
            if let Some(acc) = last_acc {
                println!("final true_accuracy {acc:.4}");
            }
            Ok(())
        }
        Command::Compare { common, modes, seeds } => {
            let config = load(&common, &overrides)?;
            let modes = if modes.is_empty() {
                Mode::ALL.to_vec()
            } else {
                modes.iter().map(|m| parse_mode(m)).collect::<Result<_, _>>()?
            };
            let seeds = if seeds.is_empty() { vec![config.train.seed] } else { parse_seeds(&seeds)? };
            commands::compare(&config, &modes, &seeds, &common.out).map(|_| ())
        }
        Command::Report { runs, out } => {
            if !overrides.is_empty() {
                return Err(CliError::Usage("report takes no config overrides".into()));
            }
            let skipped = commands::report(&runs, &out)?;
            println!("wrote {} charts to {} ({skipped} corrupt line(s) skipped)", commands::CHARTS.len(), out.display());
            Ok(())
        }
    }
}
