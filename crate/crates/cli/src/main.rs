//! `dropfact`: train dropout factorizations, run the synthetic studies, and
//! solve squared-nuclear-norm problems from the command line.
//!
//! Exit codes: 0 success, 1 verification or numerical failure, 2 usage or
//! config error.

mod commands;
mod manifest;
mod matrix_csv;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dropfact::check::CheckOptions;
use dropfact::experiments::{load_config, Experiment, Scale, StudyConfig};

use commands::{Failure, EXIT_USAGE};
use manifest::{Mode, StudyName};

#[derive(Parser)]
#[command(name = "dropfact", version, about = "Dropout for low-rank matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the built-in verification suites.
    Check {
        /// Perturb omega by 1e-3 inside the suites (negative control).
        #[arg(long, hide = true)]
        inject_omega_fault: bool,
    },
    /// Train one factorization on synthetic data and write its trace.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        scale: Option<ScaleArg>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Weight on omega for deterministic training.
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
    },
    /// Run the equivalence (fig1) or spectrum (fig2) study.
    Experiment {
        #[arg(value_enum)]
        name: StudyName,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scale: Option<ScaleArg>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Minimize ||X - Y||_F^2 + lambda ||Y||_*^2 for a CSV matrix X.
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a run from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_config(
    path: Option<&Path>,
    experiment: Experiment,
    scale: Option<ScaleArg>,
) -> Result<StudyConfig, Failure> {
    let src = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    load_config(&src, experiment, scale.map(Scale::from)).map_err(|e| {
        let mut f = Failure::from(e);
        if let Some(p) = path {
            f.message = format!("{}: {}", p.display(), f.message);
        }
        f
    })
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("DROPFACT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("DROPFACT_THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::failed(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Check { inject_omega_fault } => commands::check(CheckOptions {
            omega_fault: if inject_omega_fault { 1e-3 } else { 0.0 },
        }),
        Command::Train {
            config,
            mode,
            out,
            scale,
            seed,
            lambda,
        } => {
            let mut cfg = read_config(config.as_deref(), Experiment::Train, scale)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if lambda.is_some() {
                cfg.lambda = lambda;
            }
            let m = commands::train(cfg, mode, &out)?;
            println!("wrote {} file(s) to {}", m.outputs.len(), out.display());
            Ok(())
        }
        Command::Experiment {
            name,
            config,
            scale,
            out,
            seed,
        } => {
            let experiment = match name {
                StudyName::Fig1 => Experiment::Fig1,
                StudyName::Fig2 => Experiment::Fig2,
            };
            let mut cfg = read_config(config.as_deref(), experiment, scale)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let m = commands::experiment(name, cfg, &out)?;
            println!("wrote {} file(s) to {}", m.outputs.len(), out.display());
            Ok(())
        }
        Command::Solve { input, lambda, out } => {
            commands::solve(&input, lambda, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Replay { manifest, out } => {
            let m = commands::replay(&manifest, out.as_deref())?;
            println!("replayed {} output(s)", m.outputs.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
