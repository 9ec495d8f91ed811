//! Artifact plumbing: run directories, `meta.json`, tolerance outcomes and
//! small CSV writers. Every number is serialized with shortest-round-trip
//! formatting, so identical runs produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;

/// One verified quantity: the measured value, the bound it was held to and
/// the verdict. Values are strings so sets/booleans read naturally in
/// `meta.json`; numeric metrics live in [`Report::metrics`].
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub name: String,
    pub measured: String,
    pub bound: String,
    pub pass: bool,
}

impl Outcome {
    /// Numeric check: `measured <= bound`.
    pub fn le(name: &str, measured: f64, bound: f64) -> Outcome {
        Outcome {
            name: name.to_string(),
            measured: format!("{measured:e}"),
            bound: format!("<= {bound:e}"),
            pass: measured <= bound,
        }
    }

    /// Boolean check with a free-form measured description.
    pub fn is(name: &str, measured: impl Display, expected: impl Display, pass: bool) -> Outcome {
        Outcome {
            name: name.to_string(),
            measured: measured.to_string(),
            bound: expected.to_string(),
            pass,
        }
    }
}

/// What a subcommand hands back to `main` for meta-writing and exit-code
/// selection.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub outcomes: Vec<Outcome>,
    /// Plot-ready numeric side results (fitted rates, measured frequencies);
    /// sweeps aggregate these into columns.
    pub metrics: BTreeMap<String, f64>,
    /// Non-fatal context recorded in `meta.json` (e.g. why a run halted).
    pub note: Option<String>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.pass)
    }

    pub fn push(&mut self, outcome: Outcome) {
        self.outcomes.push(outcome);
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

/// A run that could not be set up: bad or inconsistent configuration
/// (exit 2). Numerical divergence is not an error at this level — commands
/// report it through [`ExecOutcome::Diverged`] after writing diagnostics.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(e: impl Display) -> ConfigError {
        ConfigError(e.to_string())
    }
}

impl From<zerocurve::CoreError> for ConfigError {
    fn from(e: zerocurve::CoreError) -> ConfigError {
        ConfigError(e.to_string())
    }
}

/// How a successfully configured run ended.
pub enum ExecOutcome {
    Done(Report),
    /// NaN/Inf mid-evolution. Diagnostic artifacts (last finite state,
    /// monitors so far) are already on disk; `message` goes to `meta.json`.
    Diverged { report: Report, message: String },
}

pub struct ArtifactDir {
    pub path: PathBuf,
}

impl ArtifactDir {
    pub fn create(path: &Path) -> Result<ArtifactDir, ConfigError> {
        fs::create_dir_all(path)
            .map_err(|e| ConfigError(format!("cannot create {}: {e}", path.display())))?;
        Ok(ArtifactDir { path: path.to_path_buf() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes `name` from a closure that fills an `io::Write`.
    pub fn write_with<F>(&self, name: &str, fill: F) -> Result<(), ConfigError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let mut buf: Vec<u8> = Vec::new();
        fill(&mut buf).map_err(|e| ConfigError(format!("writing {name}: {e}")))?;
        fs::write(self.file(name), buf)
            .map_err(|e| ConfigError(format!("writing {name}: {e}")))
    }

    /// Writes a CSV with the given header and rows of already-formatted cells.
    pub fn write_csv(&self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<(), ConfigError> {
        self.write_with(name, |w| {
            writeln!(w, "{header}")?;
            for row in rows {
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })
    }

    /// Writes pretty-printed JSON (stable key order via `BTreeMap`/struct
    /// fields).
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| ConfigError(format!("serializing {name}: {e}")))?;
        fs::write(self.file(name), text + "\n")
            .map_err(|e| ConfigError(format!("writing {name}: {e}")))
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'a str,
    config: &'a RunConfig,
    outcomes: &'a [Outcome],
    metrics: &'a BTreeMap<String, f64>,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: &'a Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: &'a Option<String>,
}

/// Writes `meta.json`: config echo, library version, tolerance outcomes.
pub fn write_meta(
    dir: &ArtifactDir,
    config: &RunConfig,
    report: &Report,
    error: Option<String>,
) -> Result<(), ConfigError> {
    dir.write_json(
        "meta.json",
        &Meta {
            version: env!("CARGO_PKG_VERSION"),
            config,
            outcomes: &report.outcomes,
            metrics: &report.metrics,
            pass: report.all_pass() && error.is_none(),
            note: &report.note,
            error: &error,
        },
    )
}

/// Shortest-round-trip cell formatting for CSV payloads.
pub fn cell(v: f64) -> String {
    format!("{v:e}")
}
