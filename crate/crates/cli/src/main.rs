//! `pvkit`: build tables, run signal detection methods, simulate.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 a constraint
//! violated by otherwise valid input, 4 bad usage.

mod analyze;
mod build;
mod manifest;
mod simulate;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Constraint(String),
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Input(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Constraint(_) => 3,
            Self::Usage(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) | Self::Constraint(m) | Self::Usage(m) => f.write_str(m),
        }
    }
}

impl From<pvkit::Error> for CliError {
    fn from(e: pvkit::Error) -> Self {
        use pvkit::Error as E;
        let msg = e.to_string();
        match e {
            E::Parse { .. } | E::Csv(_) | E::Json(_) | E::Io(_) | E::EmptyInput(_) | E::InvalidTable(_) => Self::Input(msg),
            E::DisjointnessViolation(_)
            | E::NoMatchingRows
            | E::DegenerateTable(_)
            | E::DegenerateMarginals { .. }
            | E::ImpossibleBaseline { .. }
            | E::FitFailure(_)
            | E::GridFailure(_)
            | E::AicFailure(_) => Self::Constraint(msg),
            E::InvalidArgument(_) | E::IndexOutOfRange(_) => Self::Usage(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pvkit", version, about = "Signal detection for adverse-event reporting data")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "PVKIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate reports or aggregate counts into an AE × drug table.
    Build(build::BuildArgs),
    /// Run one method on a table.
    Analyze(analyze::AnalyzeArgs),
    /// Score methods on synthetic tables.
    Simulate(simulate::SimulateArgs),
    /// Check the digests recorded in a manifest.
    Verify {
        manifest: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Build(a) => build::cmd_build(a),
        Command::Analyze(a) => analyze::cmd_analyze(a),
        Command::Simulate(a) => simulate::cmd_simulate(a),
        Command::Verify { manifest } => {
            let bad = manifest::verify(manifest)?;
            if bad.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(CliError::Constraint(format!("digest mismatch: {}", bad.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(4);
        }
        Some(n) => pool = pool.num_threads(n),
        None => {}
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(4);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
