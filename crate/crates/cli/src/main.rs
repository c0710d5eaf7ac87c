use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use koopman_cli::commands;
use koopman_cli::config::{parse_pairs, Algorithm, RunConfig, SystemConfig};
use koopman_cli::error::{CliError, ExitCode, Result};

/// Time-dependent Koopman spectra of linear non-autonomous systems.
#[derive(Debug, Parser)]
#[command(name = "koopfam", version, about, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the exact trajectory and write a snapshot CSV.
    Simulate(RunArgs),
    /// Run an algorithm on a snapshot CSV.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Snapshot CSV to analyse.
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare an algorithm against the closed-form oracle: E_k CSV plus a
    /// summary JSON via --report-out.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Snapshot CSV the algorithm is rerun on.
        #[arg(long)]
        snapshots: PathBuf,
        /// Spectral CSV whose Koopman exponents are checked; the rerun's
        /// own exponents when absent.
        #[arg(long)]
        spectral: Option<PathBuf>,
    },
    /// Moving-stencil bias sweep over --dt-sweep for a spiral system.
    Theorem2(RunArgs),
    /// Print the merged configuration in canonical JSON.
    Config(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration JSON; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog name, system JSON file, or inline system JSON.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    epsilon_rel: Option<f64>,
    #[arg(long)]
    stencil: Option<usize>,
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Polar observable pairs, e.g. "(0,1);(2,3)".
    #[arg(long)]
    pairs: Option<String>,
    /// Step sizes for the bias sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    dt_sweep: Option<Vec<f64>>,
    /// Stencil centre time for the bias sweep.
    #[arg(long)]
    at: Option<f64>,
    /// Spiral block index for the bias sweep.
    #[arg(long)]
    block: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    residuals_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let system = self.system.as_deref().map(SystemConfig::from_arg).transpose()?;
        let mut cfg = match (&self.config, system) {
            (Some(path), system) => {
                let mut cfg = RunConfig::load(path)?;
                if let Some(system) = system {
                    cfg.system = system;
                }
                cfg
            }
            (None, Some(system)) => RunConfig::new(system),
            (None, None) => return Err(CliError::config("one of --system or --config is required")),
        };
        let grid = &mut cfg.grid;
        set(&mut grid.t0, self.t0);
        set(&mut grid.dt, self.dt);
        set(&mut grid.steps, self.steps);
        if self.x0.is_some() {
            cfg.x0 = self.x0;
        }
        set(&mut cfg.algorithm, self.algorithm);
        let p = &mut cfg.params;
        set(&mut p.epsilon_rel, self.epsilon_rel);
        set(&mut p.rank_tol, self.rank_tol);
        set(&mut p.at, self.at);
        set(&mut p.block, self.block);
        set(&mut p.dt_sweep, self.dt_sweep);
        if self.stencil.is_some() {
            p.stencil = self.stencil;
        }
        if let Some(text) = &self.pairs {
            p.pairs = Some(parse_pairs(text)?);
        }
        let o = &mut cfg.outputs;
        for (slot, value) in [
            (&mut o.out, self.out),
            (&mut o.residuals_out, self.residuals_out),
            (&mut o.report_out, self.report_out),
        ] {
            if value.is_some() {
                *slot = value;
            }
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => commands::simulate(&args.into_config()?),
        Command::Analyze { run, input } => commands::analyze(&run.into_config()?, &input),
        Command::Compare {
            run,
            snapshots,
            spectral,
        } => commands::compare(&run.into_config()?, &snapshots, spectral.as_deref()),
        Command::Theorem2(args) => commands::theorem2(&args.into_config()?),
        Command::Config(args) => commands::show_config(&args.into_config()?),
    }
}

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        let code = if e.use_stderr() { ExitCode::Config as i32 } else { 0 };
        let _ = e.print();
        std::process::exit(code);
    });
    if let Err(e) = run(cli) {
        eprintln!("koopfam: {e}");
        std::process::exit(e.exit_code() as i32);
    }
}
