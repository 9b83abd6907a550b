use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fatigue_ocp::cli::{exit_code, run, Command, RunConfig};

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Study1,
    Study2,
    Ocp,
}

/// Fatigue-aware trajectory optimization of repeated biceps curls.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; help and version are not.
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let command = match args.command {
        Cmd::Study1 => Command::Study1,
        Cmd::Study2 => Command::Study2,
        Cmd::Ocp => Command::Ocp,
    };
    let rc = RunConfig {
        command,
        config: args.config,
        out: args.out,
        plot: args.plot,
    };
    match run(&rc) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
