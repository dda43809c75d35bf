//! Command-line surface: subcommands, flags, and their parsing rules.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use raceway_core::objective::Regime;

/// Raceway pond growth simulator and mixing-strategy optimizer.
#[derive(Debug, Parser)]
#[command(name = "raceway", version, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one configuration and write its diagnostics.
    Simulate(SimulateArgs),
    /// Compare analytic gradients against central finite differences.
    GradCheck(GradCheckArgs),
    /// Optimize the topography for one permutation.
    Optimize(OptimizeArgs),
    /// Exhaustively search all layer permutations, optimizing the
    /// topography for each.
    Search(SearchArgs),
    /// Run the permutation search for several pond lengths.
    SweepLength(SweepLengthArgs),
    /// Track the growth-rate average as the layer count grows.
    NzConvergence(NzConvergenceArgs),
    /// Write the hydrodynamic fields of one topography as CSV.
    ExportProfile(ExportProfileArgs),
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a) => &a.common,
            Command::GradCheck(a) => &a.common,
            Command::Optimize(a) => &a.common,
            Command::Search(a) => &a.common,
            Command::SweepLength(a) => &a.common,
            Command::NzConvergence(a) => &a.common,
            Command::ExportProfile(a) => &a.common,
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.common().out
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file of `key = value` lines; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory; created when missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for the permutation search; 0 picks the runtime
    /// default. Falls back to the RACEWAY_WORKERS environment variable.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,

    /// Emit SVG plots alongside the data files.
    #[arg(long, value_name = "on|off", default_value = "off")]
    pub plots: Switch,

    /// Override the pond length L in meters.
    #[arg(long = "L", value_name = "VALUE")]
    pub length: Option<f64>,

    /// Override the vertical layer count.
    #[arg(long = "Nz", value_name = "VALUE")]
    pub nz: Option<usize>,

    /// Override the Fourier mode count.
    #[arg(long = "M", value_name = "VALUE")]
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    /// Fixed water volume: optimize the wave amplitudes at a given mean
    /// height, objective is the average growth rate.
    Fixed,
    /// Free water volume: the mean height joins the design vector,
    /// objective is areal productivity.
    Variable,
}

impl RegimeArg {
    pub fn to_core(self) -> Regime {
        match self {
            RegimeArg::Fixed => Regime::Fixed,
            RegimeArg::Variable => Regime::Variable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileModeArg {
    /// Evaluate at the flat profile.
    Flat,
    /// Optimize the profile at each layer count first.
    Optimized,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Objective regime; the default evaluates the fixed-volume
    /// growth-rate average.
    #[arg(long, value_name = "fixed|variable")]
    pub regime: Option<RegimeArg>,

    /// Layer permutation as dash-separated 1-based images, for example
    /// 2-4-6-7-5-3-1. Identity when omitted.
    #[arg(long, value_name = "SIGMA")]
    pub perm: Option<String>,

    /// Profile coefficients a0,a1,..,aM as a comma-separated list.
    /// Flat at the configured mean depth when omitted.
    #[arg(long, value_name = "A0,A1,..,AM")]
    pub coeffs: Option<String>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Seed for the random instance generator.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Number of random instances, alternating between the two regimes.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, value_name = "fixed|variable")]
    pub regime: RegimeArg,

    /// Layer permutation as dash-separated 1-based images. Identity
    /// when omitted.
    #[arg(long, value_name = "SIGMA")]
    pub perm: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, value_name = "fixed|variable")]
    pub regime: RegimeArg,

    /// Permit layer counts whose factorial search would normally be
    /// refused.
    #[arg(long)]
    pub allow_large: bool,
}

#[derive(Debug, Args)]
pub struct SweepLengthArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, value_name = "fixed|variable")]
    pub regime: RegimeArg,

    /// Comma-separated pond lengths in meters, one search per entry.
    #[arg(long, value_name = "L1,L2,...")]
    pub lengths: String,

    /// Permit layer counts whose factorial search would normally be
    /// refused.
    #[arg(long)]
    pub allow_large: bool,
}

#[derive(Debug, Args)]
pub struct NzConvergenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Comma-separated layer counts to evaluate.
    #[arg(long, value_name = "N1,N2,...")]
    pub nz_list: String,

    /// Profile evaluated at each layer count.
    #[arg(long, value_name = "flat|optimized", default_value = "flat")]
    pub profile_mode: ProfileModeArg,

    /// Permutation table of `Nz: sigma` lines; layer counts without an
    /// entry are skipped. The cyclic-shift family when omitted.
    #[arg(long, value_name = "PATH")]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportProfileArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Profile coefficients a0,a1,..,aM as a comma-separated list.
    /// Flat at the configured mean depth when omitted.
    #[arg(long, value_name = "A0,A1,..,AM")]
    pub coeffs: Option<String>,
}
