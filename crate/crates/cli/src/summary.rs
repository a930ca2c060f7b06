//! Run summaries. `summary.json` and `summary.txt` are deterministic;
//! wall-clock timings go to `timing.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "within")]
    Within,
    #[serde(rename = "holds")]
    Holds,
}

/// One pass/fail line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// For `within` the target is `reference ± tolerance`.
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(name, measured, tolerance, None, Relation::AtMost, measured <= tolerance)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(name, measured, tolerance, None, Relation::AtLeast, measured >= tolerance)
    }

    pub fn below(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(name, measured, tolerance, None, Relation::Below, measured < tolerance)
    }

    pub fn within(name: impl Into<String>, measured: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (measured - reference).abs() <= tolerance;
        Self::new(name, measured, tolerance, Some(reference), Relation::Within, pass)
    }

    /// A qualitative property; `measured` is the number it was judged on.
    pub fn holds(name: impl Into<String>, measured: f64, pass: bool) -> Self {
        Self::new(name, measured, 0.0, None, Relation::Holds, pass)
    }

    fn new(
        name: impl Into<String>,
        measured: f64,
        tolerance: f64,
        reference: Option<f64>,
        relation: Relation,
        pass: bool,
    ) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            reference,
            relation,
            pass: pass && !measured.is_nan(),
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let target = match (self.relation, self.reference) {
            (Relation::Within, Some(r)) => format!("{r} ± {:e}", self.tolerance),
            (Relation::Holds, _) => "holds".to_string(),
            (Relation::AtMost, _) => format!("<= {:e}", self.tolerance),
            (Relation::AtLeast, _) => format!(">= {}", self.tolerance),
            (Relation::Below, _) => format!("< {}", self.tolerance),
            (Relation::Within, None) => unreachable!("within checks carry a reference"),
        };
        format!("{verdict} {}: measured {:e}, required {target}", self.name, self.measured)
    }
}

/// A reported number without a pass criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub measurements: Vec<Measurement>,
    pub outputs: Vec<String>,
}

impl RunSummary {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            seed,
            checks: Vec::new(),
            measurements: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn measure(&mut self, name: impl Into<String>, value: f64) {
        self.measurements.push(Measurement {
            name: name.into(),
            value,
        });
    }

    pub fn failed(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (config {})", self.command, self.config_hash);
        for c in &self.checks {
            let _ = writeln!(s, "{}", c.line());
        }
        for m in &self.measurements {
            let _ = writeln!(s, "INFO {}: {:e}", m.name, m.value);
        }
        s
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Default, Serialize)]
pub struct Timings {
    pub phases: Vec<Phase>,
}

#[derive(Debug, Serialize)]
pub struct Phase {
    pub phase: String,
    pub seconds: f64,
}

impl Timings {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.phases.push(Phase {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Output directory with the list of files written so far.
pub struct OutputDir {
    pub root: PathBuf,
    pub written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|source| CliError::Write {
            path: self.root.join(name),
            source,
        })?;
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }
}
