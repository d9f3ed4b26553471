use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lmrj::cli::{cmd_check, cmd_fit, cmd_simulate, cmd_summarize, exit_code};
use lmrj::postprocess::StateOrdering;
use lmrj::selfcheck::CheckOptions;

/// Bayesian latent Markov models fitted by reversible-jump MCMC.
#[derive(Parser)]
#[command(name = "lmrj", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ordering {
    LastCategory,
    SupportPoint,
    None,
}

impl From<Ordering> for StateOrdering {
    fn from(o: Ordering) -> Self {
        match o {
            Ordering::LastCategory => StateOrdering::LastCategory,
            Ordering::SupportPoint => StateOrdering::SupportPoint,
            Ordering::None => StateOrdering::None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a panel from a parameter file.
    Simulate {
        /// JSON or TOML file with `spec` and `params`.
        #[arg(long)]
        params: PathBuf,
        /// Number of subjects (taken from --covariates for the covariate model).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Covariate file for the covariate model; copied to the output.
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run the chains described by a config file and summarize them.
    Fit {
        config: PathBuf,
        /// Output directory; overrides the config and LMRJ_OUTPUT_ROOT.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Base seed; chain c uses seed + c.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sweeps: Option<u64>,
    },
    /// Summarize existing trace files.
    Summarize {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        burn_in: u64,
        #[arg(long, value_enum, default_value_t = Ordering::LastCategory)]
        ordering: Ordering,
        /// Summarize at this k instead of the most visited one.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        occupancy_stride: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Compare the likelihood, Jacobians, move inverses and a prior-only
    /// chain against independent oracles.
    Check {
        #[arg(long, default_value_t = 100)]
        likelihood_cases: usize,
        #[arg(long, default_value_t = 20)]
        jacobian_cases: usize,
        #[arg(long, default_value_t = 100)]
        round_trips: usize,
        #[arg(long, default_value_t = 100_000)]
        prior_sweeps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { params, n, seed, covariates, output } => {
            let r = cmd_simulate(&params, n, seed, covariates.as_deref(), &output);
            if let Ok(out) = &r {
                println!("wrote {}", out.responses.display());
            }
            report(r)
        }
        Command::Fit { config, output, seed, sweeps } => {
            let r = cmd_fit(&config, output.as_deref(), seed, sweeps);
            if let Ok(results) = &r {
                for f in results {
                    println!("{}: k* = {}, summary {}", f.name, f.summary.k_star, f.summary_json.display());
                }
            }
            report(r)
        }
        Command::Summarize { traces, burn_in, ordering, k, occupancy_stride, output } => {
            let r = cmd_summarize(&traces, burn_in, ordering.into(), k, occupancy_stride, &output);
            if let Ok(s) = &r {
                println!("k* = {}, summary written to {}", s.k_star, output.display());
            }
            report(r)
        }
        Command::Check { likelihood_cases, jacobian_cases, round_trips, prior_sweeps, seed, json } => {
            let opts = CheckOptions {
                likelihood_cases,
                jacobian_per_variant: jacobian_cases,
                round_trips,
                prior_sweeps,
                seed,
            };
            report(cmd_check(&opts, json, &mut std::io::stdout().lock()))
        }
    };
    ExitCode::from(code)
}

fn report<T>(r: lmrj::Result<T>) -> u8 {
    if let Err(e) = &r {
        eprintln!("error: {e}");
    }
    exit_code(&r) as u8
}
