//! Batch front end for the mtms library: tone design, closed-form budgets,
//! master-equation runs, figure data exports, and synthetic tomography, all
//! driven by flags or JSON configs and reproducible bit for bit.

mod commands;
mod config;
mod output;
mod preset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failures split by exit code: usage and config problems exit 2, failures
/// during computation or output exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<mtms::Error> for CliError {
    fn from(e: mtms::Error) -> Self {
        match e {
            mtms::Error::Domain(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "mtms",
    version,
    about = "Design and validation tools for multi-tone Molmer-Sorensen gates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize tone coefficients and report them with constraint residuals
    Tones(TonesArgs),
    /// Sample a phase-space trajectory (t, F, G) as CSV
    Trajectory(TrajectoryArgs),
    /// Closed-form fidelities and the leading-order error budget
    Fidelity(FidelityArgs),
    /// One master-equation run from a JSON config
    Simulate(SimulateArgs),
    /// Master-equation runs over a parameter grid, CSV output
    Sweep(SweepArgs),
    /// Data files for the standard figures
    Figure(FigureArgs),
    /// Synthetic measurement generation and maximum-likelihood fits
    Tomo(TomoArgs),
}

/// Named parameter sets selectable with --preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Demonstration operating point: delta/2pi = 292 Hz, tau = 3.42 ms.
    Paper,
}

#[derive(Args)]
pub struct TonesArgs {
    /// Number of tones
    #[arg(long)]
    pub n: usize,
    /// Tone spacing delta/2pi in Hz
    #[arg(long, default_value_t = 1.0)]
    pub delta_hz: f64,
    /// Use a named parameter set for the tone spacing
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrajectoryArgs {
    /// Number of tones
    #[arg(long)]
    pub n: usize,
    /// Tone spacing delta/2pi in Hz
    #[arg(long, default_value_t = 1.0)]
    pub delta_hz: f64,
    /// Common detuning error as a fraction of delta
    #[arg(long, default_value_t = 0.0)]
    pub detuning_frac: f64,
    /// Number of samples along the gate
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    /// Use a named parameter set for the tone spacing
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FidelityArgs {
    /// Number of tones
    #[arg(long)]
    pub n: usize,
    /// Tone spacing delta/2pi in Hz
    #[arg(long, default_value_t = 1.0)]
    pub delta_hz: f64,
    /// Common detuning error as a fraction of delta
    #[arg(long, default_value_t = 0.0)]
    pub detuning_frac: f64,
    /// Motional heating rate in quanta per second
    #[arg(long, default_value_t = 0.0)]
    pub heating_rate: f64,
    /// Mean occupation of the initial thermal motional state
    #[arg(long, default_value_t = 0.0)]
    pub nbar: f64,
    /// Use a named parameter set for the tone spacing
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON config (schema mtms-simulate/1)
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// JSON config (schema mtms-sweep/1)
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FigureId {
    /// Closed phase-space loops for one, two, and three tones
    Fig1b,
    /// The same loops left open by a 5% detuning error
    Fig1c,
    /// Fidelity vs heating for single- and two-tone gates
    Fig2,
    /// Fidelity vs fractional detuning error
    Fig3,
    /// Closed-form hot-ion parity scans at 5% detuning
    Fig4Analytic,
}

#[derive(Args)]
pub struct FigureArgs {
    /// Which figure's data to produce
    #[arg(long, value_enum)]
    pub id: FigureId,
    /// Directory for the emitted CSV files
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Use a named parameter set (tone spacing and thermal occupations)
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Detuning fraction for fig4-analytic
    #[arg(long, default_value_t = 0.05)]
    pub detuning_frac: f64,
    /// Worker threads for the solver-backed figures
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args)]
pub struct TomoArgs {
    #[command(subcommand)]
    pub command: TomoCommand,
}

#[derive(Subcommand)]
pub enum TomoCommand {
    /// Synthesize a parity dataset from a target state and readout model
    Generate(TomoGenerateArgs),
    /// Maximum-likelihood parity fit, optionally with populations
    Fit(TomoFitArgs),
}

#[derive(Args)]
pub struct TomoGenerateArgs {
    /// JSON config (schema mtms-tomo-generate/1)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TomoFitArgs {
    /// JSON config (schema mtms-tomo-fit/1)
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Tones(args) => commands::tones(&args),
        Command::Trajectory(args) => commands::trajectory_cmd(&args),
        Command::Fidelity(args) => commands::fidelity(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Figure(args) => commands::figure(&args),
        Command::Tomo(args) => match args.command {
            TomoCommand::Generate(gen) => commands::tomo_generate(&gen),
            TomoCommand::Fit(fit) => commands::tomo_fit(&fit),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
