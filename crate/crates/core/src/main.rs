use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use nsgraph::index_set::IndexSet;
use nsgraph::oracle::Membership;
use nsgraph::project::run::{exit, run_text, Command, Format, RunOptions};
use nsgraph::project::parse_pin_spec;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Validate,
    Build,
    Classify,
    Solve,
    Report,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fmt {
    Text,
    Json,
}

/// Build nonstandard graphs and operating points from a project file.
#[derive(Debug, Parser)]
#[command(name = "nsgraph", version)]
struct Cli {
    command: Cmd,
    /// Project file.
    file: PathBuf,
    /// Horizon for diagonal sequences, solves and law checks.
    #[arg(long, default_value_t = 64)]
    horizon: u64,
    /// Residual tolerance for law checks.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Largest natural rank accepted by validation.
    #[arg(long = "mu-max", default_value_t = 4)]
    mu_max: u32,
    /// Extra oracle pin `SET=in|out`; repeatable.
    #[arg(long = "oracle", value_name = "PIN", value_parser = pin)]
    pins: Vec<(IndexSet, Membership)>,
    #[arg(long, value_enum, default_value_t = Fmt::Text)]
    format: Fmt,
}

fn pin(s: &str) -> Result<(IndexSet, Membership), String> {
    parse_pin_spec(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::PARSE as u8 } else { 0 });
        }
    };
    let text = match std::fs::read_to_string(&cli.file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.file.display());
            return ExitCode::from(exit::PARSE as u8);
        }
    };
    let command = match cli.command {
        Cmd::Validate => Command::Validate,
        Cmd::Build => Command::Build,
        Cmd::Classify => Command::Classify,
        Cmd::Solve => Command::Solve,
        Cmd::Report => Command::Report,
    };
    let opts = RunOptions {
        horizon: cli.horizon,
        tol: cli.tol,
        mu_max: cli.mu_max,
        pins: cli.pins,
        format: match cli.format {
            Fmt::Text => Format::Text,
            Fmt::Json => Format::Json,
        },
    };
    let out = run_text(command, &text, &opts);
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code as u8)
}
