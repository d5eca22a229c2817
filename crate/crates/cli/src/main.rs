mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{DecisionArgs, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{count} record error(s); no output written (strict mode)")]
    Strict { count: usize },
    #[error("{count} record(s) could not be processed")]
    Unrecoverable { count: usize },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Strict { .. } | CliError::Unrecoverable { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gapinfer", version, about = "Neural-symbolic inference over semantic-parser beams")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, env = "GAPINFER_CONFIG")]
    config: Option<PathBuf>,
    /// Print the fully resolved configuration and exit
    #[arg(long, global = true)]
    print_config: bool,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(flatten)]
    decision: DecisionArgs,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Combine beams with symbolic graphs and write predictions as JSONL
    Infer(InferArgs),
    /// Corpus Smatch of predictions against gold graphs
    Score(ScoreArgs),
    /// Calibration buckets of neural and symbolic accuracy
    Calibrate(CalibrateArgs),
    /// Per-sentence pruning statistics
    PruneStats(StatsArgs),
    /// Per-sentence beam clustering statistics
    ClusterStats(StatsArgs),
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    beams: Option<PathBuf>,
    #[arg(long)]
    symbolic: Option<PathBuf>,
    /// Output file (default: stdout)
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Ignore the symbolic graphs and emit neural predictions
    #[arg(long)]
    no_symbolic: bool,
    /// Fail with exit status 2 on any record error
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    beams: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    symbolic: Option<PathBuf>,
    #[arg(long)]
    n_bins: Option<usize>,
    /// JSON report (default: stdout)
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Bucket table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    beams: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

fn or<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    or(&mut cfg.workers, cli.workers);
    cli.decision.apply(&mut cfg.decision);
    match &cli.command {
        Some(Command::Infer(a)) => {
            let s = &mut cfg.infer;
            or(&mut s.beams, a.beams.clone());
            or(&mut s.symbolic, a.symbolic.clone());
            or(&mut s.output, a.output.clone());
            s.no_symbolic |= a.no_symbolic;
            s.strict |= a.strict;
        }
        Some(Command::Score(a)) => {
            let s = &mut cfg.score;
            or(&mut s.predictions, a.predictions.clone());
            or(&mut s.gold, a.gold.clone());
            s.strict |= a.strict;
        }
        Some(Command::Calibrate(a)) => {
            let s = &mut cfg.calibrate;
            or(&mut s.beams, a.beams.clone());
            or(&mut s.gold, a.gold.clone());
            or(&mut s.symbolic, a.symbolic.clone());
            or(&mut s.output, a.output.clone());
            or(&mut s.csv, a.csv.clone());
            if let Some(n) = a.n_bins {
                s.n_bins = n;
            }
            s.strict |= a.strict;
        }
        Some(Command::PruneStats(a)) | Some(Command::ClusterStats(a)) => {
            let s = if matches!(cli.command, Some(Command::PruneStats(_))) {
                &mut cfg.prune_stats
            } else {
                &mut cfg.cluster_stats
            };
            or(&mut s.beams, a.beams.clone());
            or(&mut s.output, a.output.clone());
            s.strict |= a.strict;
        }
        None => {}
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.decision.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.workers == Some(0) {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    if cfg.calibrate.n_bins == 0 {
        return Err(CliError::Config("n_bins must be at least 1".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(CliError::Config("no subcommand given (see --help)".into()));
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match command {
        Command::Infer(_) => commands::infer(&cfg),
        Command::Score(_) => commands::score(&cfg),
        Command::Calibrate(_) => commands::calibrate(&cfg),
        Command::PruneStats(_) => commands::prune_stats(&cfg),
        Command::ClusterStats(_) => commands::cluster_stats(&cfg),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gapinfer: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
