//! The `nugget` command-line tool.
//!
//! Every command writes a JSON [`RunManifest`] next to its primary output
//! (or to `--manifest`). Exit status is 0 on success, 2 for invalid input or
//! parameters and 3 when a computation fails.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use nugget_core::NuggetError;

pub mod args;
pub mod commands;
pub mod manifest;
pub mod pipeline;

pub use args::{Cli, Command};
pub use manifest::{Recorder, RunManifest};
pub use pipeline::{run_pipeline, Config};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Bad input or parameters detected by the CLI itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl Invalid {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Exit status for a failed run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return EXIT_INVALID;
        }
        if let Some(e) = cause.downcast_ref::<NuggetError>() {
            return match e {
                NuggetError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_INVALID,
                e if e.is_validation() => EXIT_INVALID,
                _ => EXIT_RUNTIME,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return EXIT_INVALID;
            }
        }
    }
    EXIT_RUNTIME
}

/// Thread count: `NUGGET_THREADS`, then `--threads`, then all cores.
fn configure_threads(flag: Option<usize>) -> Result<()> {
    let env = match std::env::var("NUGGET_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            Some(v.trim().parse::<usize>().map_err(|_| Invalid::new(format!("NUGGET_THREADS must be a count, got '{v}'")))?)
        }
        _ => None,
    };
    let Some(n) = env.or(flag) else {
        return Ok(());
    };
    if n == 0 {
        return Err(Invalid::new("thread count must be at least 1").into());
    }
    // A pool configured earlier in this process stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn primary_output(command: &Command) -> Option<PathBuf> {
    match command {
        Command::Create(a) => Some(a.output.clone()),
        Command::Refine(a) => Some(a.output.clone()),
        Command::Cluster(a) => Some(a.output.clone()),
        Command::ChooseK(a) => Some(a.output.clone()),
        Command::Pca(a) => Some(a.output.clone()),
        Command::Quantiles(a) => a.output.clone(),
        Command::Density(a) => Some(a.output.clone()),
        Command::Simulate(a) => Some(a.output.clone()),
        Command::Decompose(a) => Some(a.output.clone()),
        Command::Bench(a) => Some(a.output.clone()),
        Command::Run(_) | Command::Rerun(_) => None,
    }
}

fn default_manifest(command: &Command) -> PathBuf {
    match primary_output(command) {
        Some(out) => {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            out.with_file_name(name)
        }
        None => PathBuf::from(format!("nugget-{}.manifest.json", command.name())),
    }
}

fn finish(mut rec: Recorder, outcome: Result<()>, manifest: PathBuf) -> Result<()> {
    match outcome {
        Ok(()) => rec.manifest.write(&manifest),
        Err(e) => {
            rec.discard();
            Err(e)
        }
    }
}

fn run_config(cfg: &Config, args: Vec<String>, manifest: Option<PathBuf>) -> Result<()> {
    let resolved = cfg.resolved();
    let mut rec = Recorder::new("run", args, serde_json::to_value(&resolved)?);
    let outcome = run_pipeline(&mut rec, cfg);
    finish(rec, outcome, manifest.unwrap_or_else(|| pipeline::manifest_path(cfg)))
}

fn dispatch(cli: &Cli, args: Vec<String>) -> Result<()> {
    let command = &cli.command;
    match command {
        Command::Run(a) => return run_config(&Config::read(&a.config)?, args, cli.manifest.clone()),
        Command::Rerun(a) => return rerun(&RunManifest::read(&a.manifest)?),
        _ => {}
    }
    let mut rec = Recorder::new(command.name(), args, serde_json::to_value(command)?);
    let outcome = match command {
        Command::Create(a) => commands::create(&mut rec, a),
        Command::Refine(a) => commands::refine(&mut rec, a),
        Command::Cluster(a) => commands::cluster(&mut rec, a),
        Command::ChooseK(a) => commands::choose_k(&mut rec, a),
        Command::Pca(a) => commands::pca(&mut rec, a),
        Command::Quantiles(a) => commands::quantiles(&mut rec, a),
        Command::Density(a) => commands::density(&mut rec, a),
        Command::Simulate(a) => commands::simulate(&mut rec, a),
        Command::Decompose(a) => commands::decompose(&mut rec, a),
        Command::Bench(a) => commands::bench(&mut rec, a),
        Command::Run(_) | Command::Rerun(_) => unreachable!(),
    };
    finish(rec, outcome, cli.manifest.clone().unwrap_or_else(|| default_manifest(command)))
}

/// Replays a manifest. Pipeline runs use the recorded configuration, so
/// the original config file need not exist any more.
pub fn rerun(m: &RunManifest) -> Result<()> {
    if m.command == "run" {
        let map: BTreeMap<String, String> =
            serde_json::from_value(m.parameters.clone()).context("manifest parameters are not a flat key-value map")?;
        let cli = Cli::try_parse_from(std::iter::once("nugget".to_string()).chain(m.args.iter().cloned()))
            .map_err(|e| Invalid::new(format!("manifest arguments: {e}")))?;
        return run_config(&Config::from_map(map)?, m.args.clone(), cli.manifest);
    }
    let cli = Cli::try_parse_from(std::iter::once("nugget".to_string()).chain(m.args.iter().cloned()))
        .map_err(|e| Invalid::new(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Invalid::new("a manifest cannot replay another rerun").into());
    }
    dispatch(&cli, m.args.clone())
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = configure_threads(cli.threads).and_then(|()| {
        let args = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
        dispatch(&cli, args)
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
