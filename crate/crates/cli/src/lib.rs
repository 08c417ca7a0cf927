//! Command-line experiments: `train`, `benchmark`, `inspect` and `neighborhood`.
//!
//! A run is described by an [`config::ExperimentConfig`] (TOML, see the README for the
//! schema); every flag overrides the matching config entry.

pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lnml_core::data::LabelColumn;

use crate::config::{ExperimentConfig, MethodKind, Overrides, PcaSetting};
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lnml", version, about = "Metric learning with learned target neighborhoods")]
pub struct Cli {
    /// Increase log detail (-v info, -vv debug); LNML_LOG takes a full filter spec.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads for folds and grid points (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one method on the whole dataset and write a model file.
    Train(RunArgs),
    /// Cross-validate several methods and write a comparison report.
    Benchmark(RunArgs),
    /// Summarize a model file.
    Inspect {
        model: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Learn a target neighborhood and dump it as CSV.
    Neighborhood(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Experiment config (TOML, or JSON such as a previous report).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Label column: header name or zero-based index.
    #[arg(long)]
    pub label_col: Option<LabelColumn>,
    /// Comma-separated methods: euclidean, lmnn, ln-lmnn, mcml, ln-mcml.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<MethodKind>>,
    /// One value fixes the budget, several make a selection grid.
    #[arg(long, value_delimiter = ',')]
    pub k_min: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub k_max: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub k_av: Option<Vec<usize>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Component count or `var:<fraction>`.
    #[arg(long)]
    pub pca: Option<PcaSetting>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Output file: model for train, report JSON for benchmark, CSV for neighborhood.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// The config file (if any) with every given flag applied.
    pub fn config(&self) -> CliResult<ExperimentConfig> {
        let mut config = match (&self.config, &self.dataset) {
            (Some(path), _) => ExperimentConfig::from_file(path)?,
            (None, Some(path)) => ExperimentConfig::from_dataset(path.clone()),
            (None, None) => return Err(CliError::validation("dataset.path", "give --config or --dataset")),
        };
        config.apply(&Overrides {
            dataset: self.dataset.clone(),
            label_column: self.label_col.clone(),
            methods: self.method.clone(),
            k_min: self.k_min.clone(),
            k_max: self.k_max.clone(),
            k_av: self.k_av.clone(),
            folds: self.folds,
            seed: self.seed,
            pca: self.pca,
            standardize: self.standardize,
        });
        // an absolute path keeps the config embedded in reports usable from anywhere
        if let Ok(abs) = std::fs::canonicalize(&config.dataset.path) {
            config.dataset.path = abs;
        }
        Ok(config)
    }
}

pub fn init_logging(verbose: u8) {
    let mut builder = env_logger::Builder::from_env(env_logger::Env::new().filter_or("LNML_LOG", "warn"));
    match verbose {
        0 => {}
        1 => {
            builder.filter_level(log::LevelFilter::Info);
        }
        _ => {
            builder.filter_level(log::LevelFilter::Debug);
        }
    }
    builder.target(env_logger::Target::Stderr).format_timestamp(None);
    let _ = builder.try_init();
}

/// Runs a parsed command line and returns what should go to standard output.
pub fn run(cli: Cli) -> CliResult<String> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::validation("--workers", "must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::validation("--workers", e.to_string()))?;
    pool.install(|| {
        let mut stdout = Vec::new();
        dispatch(cli.command, &mut stdout)?;
        Ok(String::from_utf8(stdout).expect("output is UTF-8"))
    })
}

fn dispatch(command: Command, stdout: &mut Vec<u8>) -> CliResult<()> {
    let out_err = |e: io::Error| CliError::io("<stdout>", e);
    match command {
        Command::Train(args) => {
            let mut config = args.config()?;
            if let Some(out) = &args.out {
                config.output.model = Some(out.clone());
            }
            let (model, _) = commands::train(&config)?;
            match &config.output.model {
                Some(path) => {
                    model.save(path)?;
                    writeln!(stdout, "model written to {}", path.display()).map_err(out_err)?;
                }
                None => writeln!(stdout, "{}", model.to_json()).map_err(out_err)?,
            }
        }
        Command::Benchmark(args) => {
            let mut config = args.config()?;
            if let Some(out) = &args.out {
                config.output.report = Some(out.clone());
            }
            let report = commands::benchmark(&config)?;
            report.save(config.output.report.as_deref(), config.output.table.as_deref())?;
            write!(stdout, "{}", report.to_text_table()).map_err(out_err)?;
        }
        Command::Inspect { model, json } => {
            let text = commands::inspect(&model, json)?;
            write!(stdout, "{text}").map_err(out_err)?;
        }
        Command::Neighborhood(args) => {
            let config = args.config()?;
            match &args.out {
                Some(path) => {
                    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
                    commands::neighborhood(&config, BufWriter::new(file))?;
                }
                None => commands::neighborhood(&config, &mut *stdout)?,
            }
        }
    }
    Ok(())
}
