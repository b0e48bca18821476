use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lbm-ce", version, about = "Fourth-order equivalent PDEs for MRT lattice Boltzmann schemes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive and render the equivalent equation of a scheme.
    Derive(DeriveArgs),
    /// Compare the expansion with the dispersion oracle.
    Verify(VerifyArgs),
    /// Measure modal decay on refined grids and write a convergence table.
    Simulate(SimulateArgs),
    /// Built-in schemes.
    Schemes {
        #[command(subcommand)]
        action: SchemesAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum SchemesAction {
    /// List built-in scheme names.
    List,
    /// Print a built-in scheme as a scheme file.
    Show { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Latex,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Equilibrium,
    Corrected,
}

#[derive(Debug, Args)]
pub struct SchemeArg {
    /// Scheme file path or `builtin:<name>`.
    #[arg(long)]
    pub scheme: String,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[command(flatten)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub order: u8,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Write to a file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub order: u8,
    /// Text or JSON report.
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Largest accepted coefficient deviation of the numeric fit.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Radius of the complex wavevector circle used by the numeric fit;
    /// defaults to 0.25 divided by the largest lattice speed above 1.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Adds 1/1000 to the leading coefficient of Γ_j before comparing.
    #[arg(long, hide = true)]
    pub inject_fault: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scheme: SchemeArg,
    /// Grid sizes per axis, coarse to fine.
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128])]
    pub grids: Vec<usize>,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Integer mode index per axis.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub mode: Option<Vec<i64>>,
    #[arg(long, default_value_t = 1e-4)]
    pub amplitude: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Equilibrium)]
    pub init: InitArg,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional gnuplot data file with order-4 columns.
    #[arg(long)]
    pub dat: Option<PathBuf>,
    /// Run without thread parallelism.
    #[arg(long)]
    pub sequential: bool,
}
