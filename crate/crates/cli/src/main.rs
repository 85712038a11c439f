//! `deep-disagg`: synthetic data, training, disaggregation and evaluation.
//!
//! Every command writes a `manifest.json` next to its outputs and prints one
//! JSON status line: `{"status":"ok",…}` on stdout, or an error record on
//! stderr with exit code 1.

mod args;
mod commands;
mod fsutil;
mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;

use args::{Cli, Command, ReplayArgs};
use manifest::RunManifest;

const PROGRAM: &str = "deep-disagg";
const LOG_ENV: &str = "DEEP_DISAGG_LOG";

fn out_dir(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Synth(a) => Some(&a.out),
        Command::Train(a) => Some(&a.out),
        Command::Disaggregate(a) => Some(&a.out),
        Command::Evaluate(a) => Some(&a.out),
        Command::Replay(_) => None,
    }
}

/// Runs one command and returns the path of its manifest.
fn run(cmd: &Command, args: Vec<String>) -> Result<PathBuf> {
    if let Command::Replay(r) = cmd {
        return replay(r);
    }
    let start = Instant::now();
    let mut manifest = RunManifest::new(cmd.name(), args)?;
    match cmd {
        Command::Synth(a) => commands::synth(a, &mut manifest)?,
        Command::Train(a) => commands::train(a, &mut manifest)?,
        Command::Disaggregate(a) => commands::disaggregate_cmd(a, &mut manifest)?,
        Command::Evaluate(a) => commands::evaluate_cmd(a, &mut manifest)?,
        Command::Replay(_) => unreachable!("handled above"),
    }
    let out = out_dir(cmd).expect("every non-replay command has --out");
    manifest.write(out, start.elapsed())
}

fn replay(r: &ReplayArgs) -> Result<PathBuf> {
    let recorded = RunManifest::load(&r.manifest)?;
    std::env::set_current_dir(&recorded.working_dir)
        .with_context(|| format!("entering {}", recorded.working_dir.display()))?;
    let cli = Cli::try_parse_from(std::iter::once(PROGRAM.to_string()).chain(recorded.args.iter().cloned()))
        .context("manifest arguments no longer parse")?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!("a manifest cannot record a replay");
    }
    let before = if r.check {
        recorded
            .outputs
            .iter()
            .map(|p| Ok((p.clone(), std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let manifest = run(&cli.command, recorded.args.clone())?;
    let changed: Vec<String> = before
        .iter()
        .filter(|(p, bytes)| std::fs::read(p).ok().as_ref() != Some(bytes))
        .map(|(p, _)| p.display().to_string())
        .collect();
    if !changed.is_empty() {
        bail!("replay changed {} outputs: {}", changed.len(), changed.join(", "));
    }
    Ok(manifest)
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use deep_disagg::Error as E;
    for cause in e.chain() {
        if let Some(lib) = cause.downcast_ref::<E>() {
            return match lib {
                E::DimensionMismatch(_) => "dimension_mismatch",
                E::NonFinite(_) => "non_finite",
                E::InvalidArgument(_) => "invalid_argument",
                E::Diverged { .. } => "diverged",
                E::Singular(_) => "singular",
                E::InvalidModel(_) => "invalid_model",
                E::Parse { .. } => "parse",
                E::Io(_) => "io",
                E::Json(_) => "json",
                E::Csv(_) => "csv",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "error"
}

fn error_record(command: &str, kind: &str, message: &str) -> String {
    serde_json::json!({ "status": "error", "command": command, "kind": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse_from(std::iter::once(PROGRAM.to_string()).chain(args.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let named = args.first().map(String::as_str).unwrap_or("");
            eprintln!("{}", error_record(named, "usage", e.to_string().trim_end()));
            return ExitCode::FAILURE;
        }
    };
    let name = cli.command.name();
    match run(&cli.command, args) {
        Ok(manifest) => {
            println!(
                "{}",
                serde_json::json!({ "status": "ok", "command": name, "manifest": manifest })
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", error_record(name, error_kind(&e), &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
