//! `bdgchain` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 dynamically unstable
//! model, 4 numerical failure (including failed validation checks and
//! output write errors).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bdgchain::models::Boundary;
use clap::{Parser, Subcommand, ValueEnum};

use config::{ConfigError, ModelKind, Overrides};

#[derive(Parser, Debug)]
#[command(name = "bdgchain", version, about = "Steady-state topology of driven-dissipative bosonic BdG chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelKind>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    omega_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    omega_max: Option<f64>,
    #[arg(long, global = true)]
    omega_count: Option<usize>,
    #[arg(long, global = true, value_enum)]
    bc: Option<Bc>,
    /// Sites of the simulated chain (cells for model_ii_effective, twice the
    /// cells for model_ii_full).
    #[arg(long, global = true)]
    n_sites: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, env = "BDGCHAIN_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Bc {
    Obc,
    Pbc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Singular values of ω − ℍ on the ω grid.
    Spectrum,
    /// Winding-number array over the ω window.
    Winding,
    /// Frequency-resolved and equal-time correlations, Λ(ω).
    Correlations,
    /// Disorder sweep, rescaled collapse and critical disorder.
    Disorder,
    /// Invariant suite with measured residuals.
    Validate,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Unstable(String),
    Numerical(String),
    Output(PathBuf, std::io::Error),
    ChecksFailed(usize),
}

impl From<bdgchain::Error> for Failure {
    fn from(e: bdgchain::Error) -> Self {
        match e {
            bdgchain::Error::InvalidParams(_) => Failure::Config(e.to_string()),
            bdgchain::Error::Unstable { .. } => Failure::Unstable(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Unstable(_) => 3,
            Failure::Numerical(_) | Failure::Output(..) | Failure::ChecksFailed(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) => format!("configuration error: {m}"),
            Failure::Unstable(m) => m.clone(),
            Failure::Numerical(m) => m.clone(),
            Failure::Output(p, e) => format!("cannot write {}: {e}", p.display()),
            Failure::ChecksFailed(n) => format!("{n} validation check(s) failed"),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let ov = Overrides {
        model: cli.model,
        gamma: cli.gamma,
        omega_min: cli.omega_min,
        omega_max: cli.omega_max,
        omega_count: cli.omega_count,
        boundary: cli.bc.map(|b| match b {
            Bc::Obc => Boundary::Obc,
            Bc::Pbc => Boundary::Pbc,
        }),
        n_sites: cli.n_sites,
        seed: cli.seed,
        out: cli.out,
    };
    let cfg = config::load(cli.config.as_deref(), &ov)?;
    let written = match cli.command {
        Command::Spectrum => commands::spectrum(&cfg)?,
        Command::Winding => commands::winding(&cfg)?,
        Command::Correlations => commands::correlations(&cfg)?,
        Command::Disorder => commands::disorder(&cfg)?,
        Command::Validate => {
            let (rep, written) = commands::validate(&cfg, &mut std::io::stdout())?;
            for p in &written {
                eprintln!("wrote {}", p.display());
            }
            let failed = rep.checks.iter().filter(|c| !c.passed).count();
            return if failed == 0 { Ok(()) } else { Err(Failure::ChecksFailed(failed)) };
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
    };
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bdgchain: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
