//! `finslerlab`: run Finsler geometry checks on model files.
//!
//! Exit status is 0 when every check passes, 1 when a check fails or the
//! computation breaks down, 2 for usage and model-file errors.

mod commands;
mod model_file;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use finslerlab::curvature::EffectiveDimension;

#[derive(Debug, Parser)]
#[command(
    name = "finslerlab",
    version,
    about = "Finsler and Berwald geometry checks on coordinate charts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model file (TOML)
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of probe points (command specific default)
    #[arg(long)]
    pub probes: Option<usize>,
    /// Override the tolerance of every check
    #[arg(long)]
    pub tol: Option<f64>,
    /// Write curve, tensor or check tables here
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the full report here
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// A comma separated list of numbers such as `0,0.785,-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coords(pub Vec<f64>);

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("`{}` is not a number", c.trim()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Coords)
    }
}

#[derive(Debug, Clone, Args)]
pub struct At {
    /// Base point; defaults to the chart center
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<Coords>,
    /// Tangent vector; defaults to the first coordinate axis
    #[arg(long, allow_hyphen_values = true)]
    pub vector: Option<Coords>,
}

#[derive(Debug, Clone, Args)]
pub struct Loops {
    /// Base point of the loops; defaults to the chart center
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<Coords>,
    #[arg(long, default_value_t = 12)]
    pub loops: usize,
    /// Loop size as a fraction of the chart box
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Homogeneity and strong convexity of the norm
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Is the connection independent of the reference vector?
    Berwald {
        #[command(flatten)]
        common: Common,
        /// Reference vectors per probe point
        #[arg(long)]
        vectors: Option<usize>,
    },
    /// Integrate a geodesic from (point, vector)
    Geodesic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        at: At,
        #[arg(long, default_value_t = 1.0)]
        time: f64,
    },
    /// Parallel transport along a geodesic, or norm preservation around loops
    Transport {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        at: At,
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        /// Vector to transport; defaults to the last coordinate axis
        #[arg(long, allow_hyphen_values = true)]
        carry: Option<Coords>,
        /// Transport around this many loops at --point instead
        #[arg(long)]
        loops: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Curvature tensor with antisymmetry and Bianchi checks
    Curvature {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        at: At,
    },
    /// Ricci curvature Ric(v)
    Ricci {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        at: At,
        /// Check the value against this
        #[arg(long, allow_hyphen_values = true)]
        expect: Option<f64>,
    },
    /// Flag curvature K(v, w)
    Flag {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        at: At,
        /// Transverse edge w; defaults to the last coordinate axis
        #[arg(long, allow_hyphen_values = true)]
        edge: Option<Coords>,
        #[arg(long, allow_hyphen_values = true)]
        expect: Option<f64>,
    },
    /// Weighted Ricci curvature Ric_N(v) for the model's measure
    WeightedRicci {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        at: At,
        /// N, a number at least the dimension, or `inf`
        #[arg(long, default_value = "inf")]
        dimension: EffectiveDimension,
        #[arg(long, allow_hyphen_values = true)]
        expect: Option<f64>,
    },
    /// Einstein, Ricci-flat or neither
    Einstein {
        #[command(flatten)]
        common: Common,
    },
    /// Riemannian metric with the same connection, by averaging
    Metrize {
        #[command(flatten)]
        common: Common,
    },
    /// Holonomy-invariant splitting of the tangent space
    Split {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        loops: Loops,
    },
    /// Compare Ricci curvatures of two models, or test a function for holonomy invariance
    Invariance {
        #[command(flatten)]
        common: Common,
        /// Second model sharing the connection
        #[arg(long, conflicts_with = "function")]
        against: Option<PathBuf>,
        /// Compare weighted Ricci curvatures with the first model's measure
        #[arg(long, requires = "against")]
        weighted: bool,
        /// Function of x1..xn, v1..vn to test against the holonomy
        #[arg(long)]
        function: Option<String>,
        /// Fiber samples for --function
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[command(flatten)]
        loops: Loops,
    },
    /// Distance on a product model from its factor distances
    Distance {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        from: Coords,
        #[arg(long, allow_hyphen_values = true)]
        to: Coords,
        /// One distance per factor
        #[arg(long, allow_hyphen_values = true)]
        factor_distances: Coords,
        #[arg(long, allow_hyphen_values = true)]
        expect: Option<f64>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Validate { common }
            | Command::Berwald { common, .. }
            | Command::Geodesic { common, .. }
            | Command::Transport { common, .. }
            | Command::Curvature { common, .. }
            | Command::Ricci { common, .. }
            | Command::Flag { common, .. }
            | Command::WeightedRicci { common, .. }
            | Command::Einstein { common }
            | Command::Metrize { common }
            | Command::Split { common, .. }
            | Command::Invariance { common, .. }
            | Command::Distance { common, .. } => common,
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("FINSLERLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("FINSLERLAB_THREADS={value} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let started = Instant::now();
    let common = cli.command.common().clone();
    let report = match commands::run(&cli.command) {
        Ok(r) => r,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            return ExitCode::from(failure.code);
        }
    };
    println!("{report}");
    println!("wall time {:.3}s", started.elapsed().as_secs_f64());
    let written = (|| -> anyhow::Result<()> {
        if let Some(path) = &common.json {
            std::fs::write(path, report.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
        }
        if let Some(path) = &common.csv {
            let csv = report.csv.clone().unwrap_or_else(|| report.checks_csv());
            std::fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    })();
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
