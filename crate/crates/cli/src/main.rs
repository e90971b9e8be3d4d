use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sexpde_cli::config::parse_preset;
use sexpde_cli::{run, Command, RunManifest};

#[derive(Parser)]
#[command(name = "sexpde", version, about = "Exponential-integrator SPDE solver and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Configuration file (`key = value` with sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides `study.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for Monte Carlo realizations.
    #[arg(long, global = true, env = "SEXPDE_THREADS")]
    threads: Option<usize>,

    /// Problem preset: linear2d | multiplicative-demo.
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// One realization; writes the trajectory CSV.
    Simulate,
    /// Weak error on the time-step ladder.
    ConvergeTime,
    /// Weak error on the mesh ladder.
    ConvergeSpace,
    /// Strong error on the mesh ladder.
    StrongStudy,
    /// Property checks of the numerical kernels.
    Selftest,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let preset = match cli.preset.as_deref().map(parse_preset).transpose() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let manifest = RunManifest {
        command: match cli.command {
            Cmd::Simulate => Command::Simulate,
            Cmd::ConvergeTime => Command::ConvergeTime,
            Cmd::ConvergeSpace => Command::ConvergeSpace,
            Cmd::StrongStudy => Command::StrongStudy,
            Cmd::Selftest => Command::Selftest,
        },
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads,
        preset,
    };
    match run(&manifest) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {} failed", manifest.command.name());
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
