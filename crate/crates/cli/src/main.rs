mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use hdlogit::Error;

/// Asymptotic corrections for high-dimensional logistic regression.
///
/// Every command prints a JSON result on stdout (or to --output) and a
/// short human summary on stderr.
///
/// Exit codes: 0 ok, 1 failed --check, 2 outside the MLE existence
/// region, 3 no convergence, 4 separated data, 5 probe failure,
/// 64 usage or parse error.
#[derive(Parser, Debug)]
#[command(name = "hdlogit", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random draw (default 0). For `simulate` it
    /// replaces the seed in the config.
    #[arg(long, global = true, env = "HDLOGIT_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Write the JSON result here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Suppress the human summary.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve for (alpha*, sigma*, lambda*) at (kappa, gamma).
    Solve(SolveArgs),
    /// Evaluate the MLE existence boundary.
    Boundary(BoundaryArgs),
    /// Fit the logistic MLE to a dataset.
    Fit(FitArgs),
    /// Fit and report corrected inference.
    Adjust(AdjustArgs),
    /// Estimate gamma by probing the separation frontier.
    Probe(ProbeArgs),
    /// Run a Monte Carlo experiment from a config file.
    Simulate(SimulateArgs),
    /// Run approximate message passing and compare with Newton's method.
    AmpCheck(AmpCheckArgs),
    /// Print the manual page (roff).
    #[command(hide = true)]
    Man,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, default_value_t = hdlogit::quadrature::DEFAULT_ORDER)]
    pub quad_order: usize,
}

#[derive(Args, Debug)]
pub struct BoundaryArgs {
    /// Critical kappa for each of these gamma values.
    #[arg(long, value_delimiter = ',', conflicts_with = "kappa")]
    pub gamma: Vec<f64>,
    /// Largest gamma for each of these kappa values.
    #[arg(long, value_delimiter = ',')]
    pub kappa: Vec<f64>,
    /// Trace the curve at this many gamma values in [0, --gamma-max].
    #[arg(long, conflicts_with_all = ["gamma", "kappa"])]
    pub points: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub gamma_max: f64,
    /// Also write the points as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset: CSV with a header and the response last, or HDLR1 binary.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Skip the separation check before fitting.
    #[arg(long)]
    pub no_separation_check: bool,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VarianceArg {
    Estimated,
    UnitOverN,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SamplingArg {
    Nested,
    Independent,
}

#[derive(Args, Debug)]
pub struct ProbeFlags {
    /// Subsamples per grid point.
    #[arg(long = "replicates", short = 'B', default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = SamplingArg::Nested)]
    pub sampling: SamplingArg,
    #[arg(long)]
    pub coarse_to_fine: bool,
}

#[derive(Args, Debug)]
pub struct AdjustArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Known signal strength.
    #[arg(long, required_unless_present = "probe", conflicts_with = "probe")]
    pub gamma: Option<f64>,
    /// Estimate gamma by ProbeFrontier.
    #[arg(long)]
    pub probe: bool,
    #[command(flatten)]
    pub probe_flags: ProbeFlags,
    #[arg(long, value_enum, default_value_t = VarianceArg::Estimated)]
    pub column_variance: VarianceArg,
    /// Coordinates to test (0-based); all by default.
    #[arg(long, value_delimiter = ',')]
    pub coordinates: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub probe_flags: ProbeFlags,
    /// Write the (kappa, pi_hat) curve here.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Experiment config, JSON or TOML.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Exit 1 if any configured check fails.
    #[arg(long)]
    pub check: bool,
}

#[derive(Args, Debug)]
pub struct AmpCheckArgs {
    /// Dataset to use; a Gaussian design is simulated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Write the per-iteration trajectory as CSV.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

pub const EXIT_CHECK: u8 = 1;
pub const EXIT_REGION: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;
pub const EXIT_SEPARATION: u8 = 4;
pub const EXIT_PROBE: u8 = 5;
pub const EXIT_USAGE: u8 = 64;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::OutsideExistenceRegion { .. } => EXIT_REGION,
        Error::NonConvergence { .. } | Error::BracketFailure { .. } | Error::LpCycling(_) | Error::Singular | Error::NotPsd => {
            EXIT_CONVERGENCE
        }
        Error::Separated | Error::FullDataSeparated => EXIT_SEPARATION,
        Error::FrontierNotReached { .. } => EXIT_PROBE,
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Parse(_) | Error::Io(_) => EXIT_USAGE,
    }
}

fn man_page(path: Option<&std::path::Path>) -> std::io::Result<()> {
    let mut buf = Vec::new();
    let cmd = Cli::command();
    clap_mangen::Man::new(cmd.clone()).render(&mut buf)?;
    for sub in cmd.get_subcommands().filter(|s| !s.is_hide_set()) {
        let name = format!("hdlogit-{}", sub.get_name());
        let sub = sub.clone().display_name(name.clone()).bin_name(name);
        clap_mangen::Man::new(sub).render(&mut buf)?;
    }
    match path {
        Some(p) => std::fs::write(p, buf),
        None => std::io::Write::write_all(&mut std::io::stdout().lock(), &buf),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(w) = cli.global.workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    if let Command::Man = cli.command {
        return match man_page(cli.global.output.as_deref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            }
        };
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
