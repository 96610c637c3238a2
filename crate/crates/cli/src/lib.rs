//! Command-line front end: resolves a [`RunConfig`], runs one command and
//! produces a versioned JSON report plus an optional CSV table.
//!
//! Exit status: `0` when every verdict passes, `1` when a verification fails,
//! `2` when the configuration or an input file cannot be used.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use polyloewner::Verdict;
use serde::Serialize;

pub use commands::run;
pub use config::{Cli, CommandName, RunConfig};

pub const SCHEMA: &str = "polyloewner/1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("input {0}: {1}")]
    Input(PathBuf, String),
    #[error(transparent)]
    Engine(#[from] polyloewner::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: CommandName,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub verdict: Verdict,
    pub result: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub csv: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.report.verdict == Verdict::Pass
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("reports serialize");
        s.push('\n');
        s
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Parses `args`, runs the command, writes outputs and returns the exit status.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match RunConfig::resolve(cli).and_then(|cfg| {
        let outcome = run(&cfg)?;
        emit(&cfg, &outcome)?;
        Ok(outcome)
    }) {
        Ok(outcome) => {
            if !outcome.passed() {
                eprintln!("verification failed; see the report");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn emit(cfg: &RunConfig, outcome: &Outcome) -> Result<(), CliError> {
    let json = outcome.to_json();
    match &cfg.out {
        Some(p) => write_file(p, &json)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(json.as_bytes()).map_err(|e| CliError::Io("<stdout>".into(), e))?;
        }
    }
    if let (Some(p), Some(csv)) = (&cfg.csv, &outcome.csv) {
        write_file(p, csv)?;
    }
    Ok(())
}
