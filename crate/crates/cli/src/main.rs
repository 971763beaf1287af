//! `multidyadic`: reconstruct, certify and bench from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use multidyadic::cases::SmConvention;
use multidyadic::certify::CertConfig;

use config::{BenchConfig, CommandConfig, ExperimentConfig, KernelSpec, ReconstructConfig, SpaceConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, files or configuration; exit 2.
    Usage(String),
    /// Unexpected numerical failure; exit 3.
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Internal(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(name = "multidyadic", version, about = "Multi-parameter dyadic representation experiments")]
struct Cli {
    /// Worker threads; all cores when unset. Results do not depend on it.
    #[arg(long, global = true, env = "MULTIDYADIC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand ⟨Tf, g⟩ in Haar tensors and compare with the direct pairing.
    Reconstruct(ReconstructArgs),
    /// Sample the kernel conditions of a tensor kernel.
    Certify(CertifyArgs),
    /// Time the hot paths over a depth sweep and print CSV.
    Bench(BenchArgs),
    /// Rerun a saved configuration, or the config embedded in a report.
    Run {
        config: PathBuf,
        /// Overrides the output directory of the saved configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Number of parameters.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Depth of the finest grid.
    #[arg(long = "L", default_value_t = 4)]
    depth: u32,
    /// Comma-separated per-parameter dimensions.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<u32>>,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Goodness margin.
    #[arg(long, default_value_t = 2)]
    r: u32,
    /// Registry kernel: hilbert1, hilbert2, hilbert3, modulated3, rough(β).
    /// Defaults to hilbert<n>.
    #[arg(long, conflicts_with = "kernel_file")]
    kernel: Option<String>,
    /// JSON list of kernel descriptors, one per parameter.
    #[arg(long)]
    kernel_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for JSON and CSV output; stdout when unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    SmallerCube,
    FSide,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    common: Common,
    /// Complete expansion in one grid (the default mode).
    #[arg(long)]
    fixed: bool,
    /// Goodness-weighted average over random grids.
    #[arg(long)]
    mc: bool,
    /// Expansion capped at this complexity, with a tail estimate.
    #[arg(long)]
    truncate: Option<u32>,
    /// Monte Carlo samples.
    #[arg(long = "N", default_value_t = 200)]
    samples: usize,
    #[arg(long, value_enum, default_value = "smaller-cube")]
    convention: Convention,
    /// Regroup sums by per-parameter case.
    #[arg(long)]
    buckets: bool,
    /// Random grid for fixed and truncated modes; standard grid when unset.
    #[arg(long)]
    grid_seed: Option<u64>,
    /// Raw f64 file with JSON sidecar; random when unset.
    #[arg(long)]
    f: Option<PathBuf>,
    #[arg(long)]
    g: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    #[arg(long, default_value_t = 3.0)]
    z_tolerance: f64,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 1e3)]
    threshold: f64,
    #[arg(long, default_value_t = 2.0)]
    growth: f64,
    /// Random grids for the BMO/WBP check.
    #[arg(long, default_value_t = 2)]
    grids: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 6)]
    min_depth: u32,
    #[arg(long, default_value_t = 10)]
    max_depth: u32,
    #[arg(long, default_value_t = 3)]
    reps: usize,
}

fn experiment(common: Common, command: CommandConfig) -> ExperimentConfig {
    let kernel = match (common.kernel, common.kernel_file) {
        (_, Some(path)) => KernelSpec::File(path),
        (Some(name), None) => KernelSpec::Name(name),
        (None, None) => KernelSpec::Name(format!("hilbert{}", common.n)),
    };
    ExperimentConfig {
        space: SpaceConfig {
            n: common.n,
            dims: common.dims,
            depth: common.depth,
            delta: common.delta,
            r: common.r,
        },
        kernel,
        seed: common.seed,
        command,
        out: common.out,
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let inner = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn build(command: Command) -> Result<ExperimentConfig, CliError> {
    Ok(match command {
        Command::Reconstruct(a) => {
            let rc = ReconstructConfig {
                fixed: a.fixed,
                mc: a.mc,
                truncate: a.truncate,
                samples: a.samples,
                convention: match a.convention {
                    Convention::SmallerCube => SmConvention::SmallerCube,
                    Convention::FSide => SmConvention::FSide,
                },
                buckets: a.buckets,
                grid_seed: a.grid_seed,
                f: a.f,
                g: a.g,
                tolerance: a.tolerance,
                z_tolerance: a.z_tolerance,
            };
            experiment(a.common, CommandConfig::Reconstruct(rc))
        }
        Command::Certify(a) => {
            let cc = CertConfig {
                samples: a.samples,
                seed: a.common.seed,
                threshold: a.threshold,
                growth: a.growth,
                grids: a.grids,
                ..CertConfig::default()
            };
            experiment(a.common, CommandConfig::Certify(cc))
        }
        Command::Bench(a) => {
            let bc = BenchConfig {
                min_depth: a.min_depth,
                max_depth: a.max_depth,
                reps: a.reps,
            };
            experiment(a.common, CommandConfig::Bench(bc))
        }
        Command::Run { config, out } => {
            let mut c = load_config(&config)?;
            if out.is_some() {
                c.out = out;
            }
            c
        }
    })
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(t) = threads else { return Ok(()) };
    if t == 0 {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(t)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = set_threads(cli.threads)
        .and_then(|_| build(cli.command))
        .and_then(|c| commands::run(&c));
    match result {
        Ok(v) => ExitCode::from(v.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
