//! `dmof`: seeded experiment runs over dmof-core, writing CSV, JSON and SVG.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{DivergenceChoice, ExperimentConfig, InstanceKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dmof_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(dmof_core::Error::AssertionFailed { .. }) => "assertion_failed",
            CliError::Core(_) => "invalid_input",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(dmof_core::Error::AssertionFailed { .. }) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dmof", version, about = "Seeded experiments for offline decision making")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker thread cap (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Confidence level for every command that uses one.
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write a random instance file.
    Gen {
        #[arg(long)]
        kind: Option<InstanceKind>,
        /// File name inside the output directory.
        #[arg(long)]
        output: Option<String>,
    },
    /// Solve EDD at one λ and check its loss against EOEC.
    Edd {
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        observation: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// EOEC over a list of λ values.
    Eoec {
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long)]
        observation: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// OEC with the model laws as references, plus the EOEC ≤ OEC + penalty frequency check.
    Oec {
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum)]
        divergence: Option<DivergenceChoice>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Exact minimax value against the OEC lower bound.
    LowerBound {
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_enum)]
        divergence: Option<DivergenceChoice>,
    },
    /// EDD loss against N on a tabular sequential problem.
    RateSweep {
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        svg: bool,
    },
    /// EDD loss or regret against N on a supervised problem.
    SlSweep {
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Score raw loss instead of regret.
        #[arg(long)]
        uncentered: bool,
        #[arg(long)]
        svg: bool,
    },
    /// Run every lemma corpus.
    Lemmas,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(e) = cli.eps {
        cfg.eps = e;
    }
    if cli.delta.is_some() {
        cfg.delta = cli.delta;
    }
    match cli.command.clone() {
        Command::Gen { kind, output } => {
            cfg.gen.kind = kind.unwrap_or(cfg.gen.kind);
            cfg.gen.output = output.unwrap_or(cfg.gen.output);
        }
        Command::Edd { instance, lambda, observation, samples } => {
            cfg.instance = instance.or(cfg.instance);
            cfg.edd.lambda = lambda.unwrap_or(cfg.edd.lambda);
            cfg.edd.data.observation = observation.or(cfg.edd.data.observation);
            cfg.edd.data.samples = samples.unwrap_or(cfg.edd.data.samples);
        }
        Command::Eoec { instance, lambdas, observation, samples } => {
            cfg.instance = instance.or(cfg.instance);
            if !lambdas.is_empty() {
                cfg.eoec.lambdas = lambdas;
            }
            cfg.eoec.data.observation = observation.or(cfg.eoec.data.observation);
            cfg.eoec.data.samples = samples.unwrap_or(cfg.eoec.data.samples);
        }
        Command::Oec { instance, lambda, divergence, trials } => {
            cfg.instance = instance.or(cfg.instance);
            cfg.oec.lambda = lambda.unwrap_or(cfg.oec.lambda);
            cfg.oec.divergence = divergence.unwrap_or(cfg.oec.divergence);
            cfg.oec.trials = trials.unwrap_or(cfg.oec.trials);
        }
        Command::LowerBound { instance, divergence } => {
            cfg.instance = instance.or(cfg.instance);
            cfg.lower_bound.divergence = divergence.unwrap_or(cfg.lower_bound.divergence);
        }
        Command::RateSweep { instance, grid, trials, svg } => {
            cfg.instance = instance.or(cfg.instance);
            if !grid.is_empty() {
                cfg.rate_sweep.grid = grid;
            }
            cfg.rate_sweep.trials = trials.unwrap_or(cfg.rate_sweep.trials);
            cfg.rate_sweep.svg |= svg;
        }
        Command::SlSweep { instance, grid, trials, uncentered, svg } => {
            cfg.instance = instance.or(cfg.instance);
            if !grid.is_empty() {
                cfg.sl_sweep.grid = grid;
            }
            cfg.sl_sweep.trials = trials.unwrap_or(cfg.sl_sweep.trials);
            cfg.sl_sweep.centered &= !uncentered;
            cfg.sl_sweep.svg |= svg;
        }
        Command::Lemmas => {}
    }
    cfg.apply_global_delta();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = build_config(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    commands::run(&cli.command, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = serde_json::json!({ "error": "usage", "message": e.to_string() });
            eprintln!("{report}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code())
        }
    }
}
