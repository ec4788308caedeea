//! Front end for `sdgame-core`: game files, subcommands and result export.

pub mod commands;
pub mod error;
pub mod export;
pub mod spec_file;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{run, Outcome};
pub use error::CliError;
pub use export::{emit, render};
pub use spec_file::{load_spec, parse_spec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Parsed command line; one seed governs all randomness.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "sdgame",
    version,
    about = "Set values of stochastic differential games on desk-scale grids"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Game file in the sectioned format.
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Binary tree depth (at most 22).
    #[arg(long, global = true, default_value_t = 12)]
    pub depth: usize,
    /// Interior grid points of the PDE grid on [-6, 6].
    #[arg(long, global = true, default_value_t = 1199)]
    pub nx: usize,
    /// Strictly decreasing list of ε values for the continuity report.
    #[arg(long, global = true, default_value = "0.1,0.05,0.01")]
    pub eps_ladder: String,
    /// Random adapted index maps drawn by `set-value`.
    #[arg(long, global = true, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Equilibrium clouds over a θ lattice with a continuity report, or at one θ.
    Hamiltonian {
        /// Single θ as `t,x1..xd,z` with z listed player by player.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        /// ε for the single-θ cloud.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// Isaacs condition on a lattice with z2 = -z1; exit code 3 when it fails.
    Isaacs,
    /// Sampled set-value cloud with a certified band.
    SetValue {
        /// Number of cloud points pushed through the control construction.
        #[arg(long, default_value_t = 10)]
        band: usize,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
    /// PDE value: control value (N = 1), zero-sum value, or singleton selector.
    Pde,
    /// Certificate for a control profile file.
    Certify {
        #[arg(long)]
        control: PathBuf,
    },
    /// Control tracking a target process file, with its certificate.
    Construct {
        #[arg(long)]
        eta: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
    /// Hausdorff distance between two exported clouds.
    Hausdorff { a: PathBuf, b: PathBuf },
}
