//! Flags, flat `key=value` config files and the resolved [`RunConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use polyloewner::search::{Method, SEARCH_HORIZON};
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    VerifyCatalog,
    CheckGenerator,
    Evolve,
    Limit,
    Bounds,
    Search,
    Caratheodory,
    /// List the catalog, or dump one map's jet with `--map`.
    Catalog,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    CatalogRotation,
    ProductForm,
    ConvexCombo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Coordinate,
    Simplex,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Method {
        match m {
            MethodName::Coordinate => Method::RandomRestartCoordinate,
            MethodName::Simplex => Method::SimplexPolish,
        }
    }
}

/// Command line. Every option may also come from `--config` as `key=value`
/// (key = long flag name without dashes); flags win over the file.
#[derive(Clone, Debug, Default, Parser)]
#[command(name = "polyloewner", version, allow_negative_numbers = true, about = "Loewner evolution on the polydisc")]
pub struct Cli {
    /// What to run; may instead be given as `command=...` in the config file.
    #[arg(value_enum)]
    pub command: Option<CommandName>,
    /// Flat key=value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the CSV table (bounds, search history, ...) here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Omit the timestamp so identical runs give byte-identical reports.
    #[arg(long)]
    pub deterministic: bool,

    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub degree: Option<usize>,
    /// Slack for bound checks.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub membership_tol: Option<f64>,
    /// Angles per coordinate of the membership grid.
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Generator JSON file (`check-generator`).
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Field JSON file (`evolve`, `limit`, `bounds`).
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Catalog map name (`bounds`, `catalog`).
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Start time of `evolve`.
    #[arg(long)]
    pub s: Option<f64>,
    /// End time of `evolve`.
    #[arg(long)]
    pub t: Option<f64>,
    /// Number of sample points.
    #[arg(long)]
    pub points: Option<usize>,

    /// Target multi-index, e.g. `0,2`.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    #[arg(long)]
    pub pieces: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodName>,
    /// Atoms per factor of the product-form family.
    #[arg(long)]
    pub atoms: Option<usize>,
    /// Parts of the convex-combination family.
    #[arg(long)]
    pub parts: Option<usize>,

    /// Atomic measure `angle:weight,angle:weight,...` (`caratheodory`).
    #[arg(long)]
    pub measure: Option<String>,
    /// Additional random measures to check (`caratheodory`).
    #[arg(long)]
    pub random: Option<usize>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f; } )*
    };
}

impl Cli {
    /// Fills every option not given on the command line from `other`.
    fn fill_from(&mut self, other: Cli) {
        let o = other;
        merge_fields!(self, o; command, out, csv, step, horizon, degree, tol, membership_tol, angles, seed,
            file, field, map, dim, s, t, points, alpha, family, pieces, budget, method, atoms, parts, measure, random);
        self.deterministic |= o.deterministic;
    }
}

/// Parses a flat `key=value` file into the same option set as the command line.
pub fn parse_config_text(text: &str) -> Result<Cli, CliError> {
    let mut argv = vec!["polyloewner".to_string()];
    let mut command = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        match key.as_str() {
            "command" => command = Some(value.to_string()),
            "config" => return Err(CliError::Config(format!("line {}: nested config files are not supported", lineno + 1))),
            "deterministic" => match value {
                "true" | "1" | "yes" => argv.push("--deterministic".into()),
                "false" | "0" | "no" => {}
                _ => return Err(CliError::Config(format!("line {}: deterministic must be true or false", lineno + 1))),
            },
            _ => {
                argv.push(format!("--{key}"));
                argv.push(value.to_string());
            }
        }
    }
    if let Some(c) = command {
        argv.insert(1, c);
    }
    Cli::try_parse_from(&argv).map_err(|e| CliError::Config(e.to_string()))
}

pub fn read_config(path: &Path) -> Result<Cli, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    parse_config_text(&text)
}

/// Fully resolved settings of one run; echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub step: f64,
    pub horizon: f64,
    pub degree: usize,
    pub tol: f64,
    pub membership_tol: f64,
    pub angles: usize,
    pub seed: u64,
    pub deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub s: f64,
    pub t: f64,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<u32>>,
    pub family: FamilyName,
    pub pieces: usize,
    pub budget: usize,
    pub method: MethodName,
    pub atoms: usize,
    pub parts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<String>,
    pub random: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be at least {min}, got {v}")))
    }
}

pub fn parse_alpha(s: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|p| u32::from_str(p.trim()).map_err(|_| CliError::Config(format!("bad multi-index `{s}`"))))
        .collect()
}

impl RunConfig {
    /// Applies `--config` (flags win) and the built-in defaults, then validates.
    pub fn resolve(mut cli: Cli) -> Result<RunConfig, CliError> {
        if let Some(path) = cli.config.clone() {
            cli.fill_from(read_config(&path)?);
        }
        let command = cli.command.ok_or_else(|| CliError::Config("no command given".into()))?;
        let default_horizon = if command == CommandName::Search { SEARCH_HORIZON } else { 15.0 };
        let cfg = RunConfig {
            command,
            step: positive("step", cli.step.unwrap_or(1e-2))?,
            horizon: positive("horizon", cli.horizon.unwrap_or(default_horizon))?,
            degree: at_least("degree", cli.degree.unwrap_or(if command == CommandName::Search { 3 } else { 4 }), 2)?,
            tol: positive("tol", cli.tol.unwrap_or(1e-6))?,
            membership_tol: positive("membership-tol", cli.membership_tol.unwrap_or(1e-9))?,
            angles: at_least("angles", cli.angles.unwrap_or(64), 8)?,
            seed: cli.seed.unwrap_or(0),
            deterministic: cli.deterministic,
            file: cli.file,
            field: cli.field,
            map: cli.map,
            dim: cli.dim.map(|d| at_least("dim", d, 1)).transpose()?,
            s: cli.s.unwrap_or(0.0),
            t: cli.t.unwrap_or(1.0),
            points: cli.points.unwrap_or(50),
            alpha: cli.alpha.as_deref().map(parse_alpha).transpose()?,
            family: cli.family.unwrap_or(FamilyName::CatalogRotation),
            pieces: at_least("pieces", cli.pieces.unwrap_or(1), 1)?,
            budget: at_least("budget", cli.budget.unwrap_or(500), 1)?,
            method: cli.method.unwrap_or(MethodName::Coordinate),
            atoms: cli.atoms.unwrap_or(2),
            parts: cli.parts.unwrap_or(2),
            measure: cli.measure,
            random: cli.random.unwrap_or(0),
            out: cli.out,
            csv: cli.csv,
        };
        if !(cfg.t >= cfg.s && cfg.s >= 0.0) {
            return Err(CliError::Config(format!("need 0 <= s <= t, got s = {}, t = {}", cfg.s, cfg.t)));
        }
        Ok(cfg)
    }

    pub fn search_method(&self) -> Method {
        self.method.into()
    }
}
