//! Experiment runner for the `emergence-core` simulations.
//!
//! Every subcommand reads one JSON config, writes its CSV/JSON outputs plus
//! `summary.json`, `summary.txt` and `timing.json` into the output directory,
//! and maps failures to exit codes: 2 config, 3 blow-up, 4 guard or failed check.

pub mod commands;
pub mod config;
pub mod error;
pub mod summary;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use error::{CliError, EXIT_BLOW_UP, EXIT_CONFIG, EXIT_GUARD, EXIT_OK};
pub use summary::{Check, RunSummary};

use summary::{OutputDir, Timings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CheckCoords,
    Md,
    Ensemble,
    Quantum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::CheckCoords => "check-coords",
            Self::Md => "md",
            Self::Ensemble => "ensemble",
            Self::Quantum => "quantum",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Summary written to disk; `error` is set when the run aborted.
#[derive(Debug, serde::Serialize)]
struct SummaryFile<'a> {
    #[serde(flatten)]
    summary: &'a RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Runs one subcommand. Outputs and summaries are written even when the run fails.
pub fn execute(command: Command, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let mut cfg = ExperimentConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let root = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::invalid("no output directory: pass --out or set output_dir"))?;
    if opts.workers == Some(0) {
        return Err(CliError::invalid("--workers must be at least 1"));
    }
    // the hash identifies the experiment, not where it was written
    let hash = ExperimentConfig {
        output_dir: None,
        ..cfg.clone()
    }
    .hash();

    let mut out = OutputDir::create(&root)?;
    let mut timings = Timings::default();
    let mut summary = RunSummary::new(command.name(), hash, cfg.seed);
    let result = match command {
        Command::CheckCoords => commands::coords::run(&cfg, &mut summary, &mut timings),
        Command::Md => commands::md::run(&cfg, &mut out, &mut summary, &mut timings),
        Command::Ensemble => commands::ensemble::run(&cfg, &mut out, &mut summary, &mut timings, opts.workers),
        Command::Quantum => commands::quantum::run(&cfg, &mut out, &mut summary, &mut timings),
    };

    summary.outputs = out.written.clone();
    summary.outputs.extend(["summary.json", "summary.txt"].map(String::from));
    let file = SummaryFile {
        summary: &summary,
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    out.write_json("summary.json", &file)?;
    let mut text = summary.text();
    if let Some(e) = &file.error {
        text.push_str(&format!("ERROR {e}\n"));
    }
    out.write_bytes("summary.txt", text.as_bytes())?;
    out.write_json("timing.json", &timings)?;

    result?;
    let failed = summary.failed();
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}
