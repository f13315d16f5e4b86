use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rkm_cli::commands;
use rkm_cli::config::{ExperimentConfig, ExperimentKind};
use rkm_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "rkm",
    version,
    about = "Radial-kernel spectral clustering experiments"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed, overriding the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Allow runs beyond desk scale, such as the n = 10000 figure1 panel.
    #[arg(long, global = true)]
    large: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample a mixture and write it as CSV and binary.
    Sample,
    /// Second singular vector of the cosine kernel matrix for the figure1 mixture family.
    Figure1,
    /// Top singular values of single-Gaussian kernel matrices across dimensions.
    GapScan,
    /// Kernel PCA clustering over a seed grid.
    KpcaCluster,
    /// Covariance-based clustering on the sphere over a seed grid.
    CovCluster,
    /// Empirical component Gram matrix against its closed form or expansion.
    GramCheck,
    /// Kernel smoothness constants for the configured model.
    DiagCh,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Sample => ExperimentKind::Sample,
            Command::Figure1 => ExperimentKind::Figure1,
            Command::GapScan => ExperimentKind::GapScan,
            Command::KpcaCluster => ExperimentKind::KpcaCluster,
            Command::CovCluster => ExperimentKind::CovCluster,
            Command::GramCheck => ExperimentKind::GramCheck,
            Command::DiagCh => ExperimentKind::DiagCh,
        }
    }
}

fn execute(cli: &Cli) -> CliResult<Vec<String>> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?.with_defaults(kind),
        None => ExperimentConfig::defaults_for(kind),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    commands::run(kind, &cfg, cli.large)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
