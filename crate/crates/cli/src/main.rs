//! `kramers`: spin-Hamiltonian predictions and fits from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod args;
mod commands;
mod config;
mod selftest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Parser, Subcommand};

use args::{AbsorptionArgs, EprMapArgs, FitArgs, InvertArgs, ManifoldArgs, OrderingArgs, ShbMapArgs, ZefozArgs};
use config::RunConfig;

const STAMP: &str = concat!("kramers ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(
    name = "kramers",
    version,
    about = "Hyperfine and Zeeman spectroscopy of spin-1/2 dopant ions"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Omit the version line from CSV output.
    #[arg(long, global = true)]
    no_stamp: bool,
    /// Print the CSV columns of the subcommand and exit.
    #[arg(long, global = true)]
    schema: bool,
    /// Write the main CSV here instead of stdout.
    #[arg(short, long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Energy levels of one manifold.
    Levels(ManifoldArgs),
    /// Transition frequencies and field sensitivities of one manifold.
    Transitions(ManifoldArgs),
    /// Inhomogeneous optical absorption spectrum.
    Absorption(AbsorptionArgs),
    /// Spectral-hole pattern against field magnitude.
    ShbMap(ShbMapArgs),
    /// Magnetic-dipole transitions with relative moments.
    Odmr(ManifoldArgs),
    /// EPR resonance fields over a rotation plane.
    EprMap(EprMapArgs),
    /// Least-squares fit of tensor orientations to measured transitions.
    Fit(FitArgs),
    /// Hyperfine principal values from zero-field lines.
    Invert(InvertArgs),
    /// Rank hyperfine sign classes against optical peak positions.
    Ordering(OrderingArgs),
    /// Search for zero first-order Zeeman points.
    Zefoz(ZefozArgs),
    /// Built-in regression checks against reference values.
    Selftest,
}

/// Machine-readable failure: printed to stderr as one JSON object.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub key: Option<String>,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>, key: Option<&str>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            key: key.map(str::to_string),
        }
    }

    pub fn input(key: &str, message: impl Into<String>) -> Self {
        Self::new("invalid-input", message, Some(key))
    }

    /// Core error attributed to a command-line flag.
    pub fn at(key: &str) -> impl FnOnce(kramers_core::Error) -> Self + '_ {
        move |e| {
            let mut c = CliError::from(e);
            c.key.get_or_insert_with(|| key.to_string());
            c
        }
    }

    fn to_json(&self) -> String {
        serde_json::json!({ "code": self.code, "message": self.message, "key": self.key }).to_string()
    }
}

impl From<kramers_core::Error> for CliError {
    fn from(e: kramers_core::Error) -> Self {
        Self::new(e.code(), e.to_string(), e.key())
    }
}

/// Everything a subcommand produces; nothing touches the disk until the
/// computation has succeeded.
pub struct Output {
    pub csv: String,
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub success: bool,
}

pub struct Context {
    pub config: RunConfig,
    pub stamp: Option<&'static str>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("KRAMERS_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::new(
            "config",
            format!("expected a positive integer, got `{value}`"),
            Some("KRAMERS_THREADS"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new("config", e.to_string(), Some("KRAMERS_THREADS")))
}

fn usage_error(e: &clap::Error) -> CliError {
    let key = match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => Some(
            s.split_whitespace()
                .next()
                .unwrap_or(s)
                .trim_start_matches('-')
                .to_string(),
        ),
        _ => None,
    };
    let message = e.to_string();
    let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
    CliError {
        code: "usage".into(),
        message: first.to_string(),
        key,
    }
}

fn run(cli: Cli) -> Result<Output, CliError> {
    if cli.schema {
        return Ok(Output {
            csv: commands::schema(&cli.command),
            files: Vec::new(),
            success: true,
        });
    }
    configure_threads()?;
    let config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::at("config"))?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        config,
        stamp: (!cli.no_stamp).then_some(STAMP),
    };
    commands::execute(&cli.command, &ctx)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", usage_error(&e).to_json());
            return ExitCode::from(2);
        }
    };
    let target = cli.output.clone();
    let output = match run(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}", e.to_json());
            return ExitCode::FAILURE;
        }
    };
    let written = match &target {
        Some(path) => std::fs::write(path, &output.csv).map_err(|e| (path.clone(), e)),
        None => std::io::stdout()
            .write_all(output.csv.as_bytes())
            .map_err(|e| (PathBuf::from("-"), e)),
    }
    .and_then(|()| {
        output
            .files
            .iter()
            .try_for_each(|(path, bytes)| std::fs::write(path, bytes).map_err(|e| (path.clone(), e)))
    });
    if let Err((path, e)) = written {
        let err = CliError::new("io", format!("{}: {e}", path.display()), Some("output"));
        eprintln!("{}", err.to_json());
        return ExitCode::FAILURE;
    }
    if let Some(path) = &target {
        eprintln!("wrote {}", path.display());
    }
    for (path, _) in &output.files {
        eprintln!("wrote {}", path.display());
    }
    if output.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
