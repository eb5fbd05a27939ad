//! Experiment runner behind the `mfpmp` binary: configuration ingestion,
//! solver orchestration and CSV/JSON artifacts.

pub mod config;
pub mod output;
pub mod run;

use std::fmt::Write as _;
use std::path::PathBuf;

use mfpmp::problems::catalog;

pub use config::ExperimentConfig;
pub use run::{run, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("run failed: {message} (partial artifacts kept in {})", dir.display())]
    Solver { message: String, dir: PathBuf },
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            _ => 1,
        }
    }
}

/// Human-readable catalog listing in catalog order.
pub fn list_problems() -> String {
    let mut out = String::new();
    for entry in catalog() {
        let _ = writeln!(out, "{}", entry.id);
        let _ = writeln!(out, "  setting: {}", entry.setting);
        let _ = writeln!(out, "  {}", entry.summary.split_whitespace().collect::<Vec<_>>().join(" "));
        let _ = writeln!(out, "  parameters:");
        for p in entry.params {
            let _ = writeln!(out, "    {:<18} {:>8}  {}", p.name, p.default, p.doc);
        }
        let _ = writeln!(out);
    }
    out
}
