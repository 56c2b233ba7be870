mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "feedsim", version, about = "Mirroring-attack simulator for majority-vote data feeds")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Rescale confusion rows that do not sum to one instead of rejecting them.
    #[arg(long, global = true)]
    renormalize: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exact,
    Mc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a config file and report every violation.
    Validate { config: PathBuf },
    /// Expected payoff of one user on `c` oracles, everyone else on one.
    Payoff {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        user: usize,
        #[arg(long)]
        c: u32,
        #[arg(long)]
        d: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        #[arg(long, default_value_t = feedsim_core::payoff::DEFAULT_MC_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = commands::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest grid exponent at which one oracle per user is an equilibrium.
    SolveD {
        config: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 16.0)]
        d_max: f64,
        /// Treat every oracle as its own user.
        #[arg(long)]
        from_oracle_stakes: bool,
        #[arg(long, default_value_t = feedsim_core::payoff::DEFAULT_MC_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = commands::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Payoff and error rate over a grid of oracle counts and exponents.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        user: Option<usize>,
        /// `a..b` (inclusive) or a comma list.
        #[arg(long)]
        c_range: Option<String>,
        /// Comma list of exponents.
        #[arg(long)]
        d_list: Option<String>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a confusion matrix from gold-labeled annotations.
    EstimateCm {
        records: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        min_participation: f64,
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
        /// JSON object mapping raw label strings to 1-based classes.
        #[arg(long)]
        label_map: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
