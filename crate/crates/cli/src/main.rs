mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "padst", version)]
#[command(about = "Permutation-augmented dynamic sparse training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchFamily {
    Diagonal,
    Block,
    Nm,
    Unstructured,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoint, report and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Linear-region lower bounds for a network spec or a built-in preset.
    Bounds {
        /// Spec JSON path, or the preset variant when --preset is given.
        spec: Option<String>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time plain, explicit-permutation and re-indexed sparse products.
    BenchReindex {
        #[arg(long, default_value = "256")]
        n: usize,
        #[arg(long, default_value = "0.25")]
        density: f64,
        #[arg(long, value_enum, default_value = "diagonal")]
        family: BenchFamily,
        #[arg(long, default_value = "4")]
        block_size: usize,
        /// N:M ratio for the nm family, as `N:M`.
        #[arg(long, default_value = "1:4")]
        nm: String,
        #[arg(long, default_value = "20")]
        repeats: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-layer permutation table of a checkpoint, as CSV.
    InspectPerm {
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit codes: 2 for bad input, 3 for divergence, 1 for anything else.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Diverged(usize),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Diverged(step) => write!(f, "training diverged at step {step}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PADST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("PADST_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Train { config, out, seed } => commands::train(&config, &out, seed),
        Command::Bounds { spec, preset, format, out } => {
            commands::bounds(spec.as_deref(), preset.as_deref(), format, out.as_deref())
        }
        Command::BenchReindex { n, density, family, block_size, nm, repeats, seed, format, out } => {
            let structure = commands::bench_structure(family, block_size, &nm)?;
            let cfg = padst::bench::BenchConfig { n, density, structure, repeats, seed };
            commands::bench(&cfg, format, out.as_deref())
        }
        Command::InspectPerm { checkpoint, out } => commands::inspect_perm(&checkpoint, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("padst: {e}");
            ExitCode::from(e.code())
        }
    }
}
