//! Command-line front end: `solve`, `study`, `rate`, `verify-cost` and
//! `oracle`. Settings come from a flat `key = value` file (`--config`) with
//! `--<key>` flags layered on top.

mod config;
mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser};

pub use config::{parse_levels, CliConfig, OracleKind, RawConfig, Subcommand, KEYS, SEED_ENV};
pub use run::run;

use crate::error::Error;

macro_rules! flags {
    ($($field:ident => $key:literal: $help:literal,)*) => {
        /// Settings shared by every subcommand. Each flag mirrors a config key.
        #[derive(Args, Clone, Debug, Default)]
        pub struct Flags {
            /// Flat `key = value` config file; flags override its entries.
            #[arg(long)]
            pub config: Option<PathBuf>,
            $(
                #[arg(long = $key, help = $help, allow_hyphen_values = true, value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl Flags {
            fn raw(&self) -> crate::error::Result<RawConfig> {
                let mut raw = RawConfig::default();
                $(
                    if let Some(v) = &self.$field {
                        raw.set($key, v)?;
                    }
                )*
                Ok(raw)
            }
        }
    };
}

flags! {
    problem => "problem": "Diffusion: heat or gbm",
    mu => "mu": "GBM drift",
    sigma => "sigma": "GBM volatility",
    d => "d": "Space dimension",
    horizon => "T": "Time horizon",
    f => "f": "Nonlinearity: zero, linear:<a>, allen-cahn, default-risk:<δ;R;γ_h;γ_l;v_h;v_l>",
    interval => "interval": "Interval `lo;hi` for the nonlinearity",
    clamp => "clamp": "Clamp u to the interval before evaluating f (true/false)",
    g => "g": "Initial value, e.g. constant:<c>, sum, norm_sq, log_half_one_plus_normsq, min_coord",
    t => "t": "Evaluation time (default T)",
    x => "x": "Evaluation point: one value broadcast to all coordinates or a comma list of d values",
    n => "n": "Picard depth",
    m => "M": "Monte Carlo base",
    levels => "levels": "Levels: k (n = M = k), a:b, n/M, comma separated",
    seeds => "seeds": "Seeds per level in a study",
    seed => "seed": "Root seed (falls back to MLPPDE_SEED, then 0)",
    threads => "threads": "Worker threads (default: logical processors)",
    output => "output": "Output directory of a study",
    reference => "reference": "Study reference: quadrature, ode, exact:<v>, feynman-kac[:<samples>], self:n=M=<k>",
    depth_guard => "depth_guard": "Largest admissible n",
    samples => "samples": "Monte Carlo samples for oracles",
    lambda => "lambda": "Control cost weight of the Cole-Hopf oracle",
    oracle => "oracle": "Oracle: feynman-kac, cole-hopf, hopf, ode-picard, quadrature",
    input => "input": "Summary CSV read by `rate`",
    time_steps => "time_steps": "Quadrature time steps",
    space_points => "space_points": "Quadrature space points",
    space_radius => "space_radius": "Quadrature space radius",
    picard_iters => "picard_iters": "Quadrature fixed-point iteration cap",
}

#[derive(Parser, Debug)]
#[command(name = "mlppde", version, about = "Multilevel Picard solver and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Run one MLP estimate and print it with its cost ledger.
    Solve(Flags),
    /// Run a convergence study and write rows.csv and summary.csv.
    Study(Flags),
    /// Fit the log-log error-versus-cost slope of a summary CSV.
    Rate(Flags),
    /// Compare measured and predicted cost ledgers.
    VerifyCost(Flags),
    /// Evaluate a reference oracle at a point.
    Oracle(Flags),
}

/// Builds the effective configuration from parsed flags, an optional config
/// file and the seed environment variable.
pub fn parse_config(command: Subcommand, flags: &Flags, env_seed: Option<&str>) -> crate::error::Result<CliConfig> {
    let mut raw = match &flags.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    raw.overlay(&flags.raw()?);
    CliConfig::from_raw(command, &raw, env_seed)
}

/// One-line machine-parsable rendering of an error.
pub fn error_line(e: &Error) -> String {
    match e {
        Error::Config { key, reason } => format!("error key={key}: {reason}"),
        Error::InvalidArgument { name, reason } => format!("error key={name}: {reason}"),
        other => format!("error: {}", other.to_string().replace('\n', " ")),
    }
}

/// Entry point of the binary. Returns the exit status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(err, "error: {}", first.trim_start_matches("error: ").trim());
            return 2;
        }
    };
    let (command, flags) = match &cli.command {
        Command::Solve(f) => (Subcommand::Solve, f),
        Command::Study(f) => (Subcommand::Study, f),
        Command::Rate(f) => (Subcommand::Rate, f),
        Command::VerifyCost(f) => (Subcommand::VerifyCost, f),
        Command::Oracle(f) => (Subcommand::Oracle, f),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let result = parse_config(command, flags, env_seed.as_deref()).and_then(|config| run(&config, out, err));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(&e));
            1
        }
    }
}
