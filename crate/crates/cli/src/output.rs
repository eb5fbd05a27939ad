//! CSV row types. Column order is the field order and is documented in
//! `docs/outputs.md`; floats are written in shortest round-trip form.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const SWEEP: &str = "sweep.csv";
pub const REPORT: &str = "report.csv";
pub const LABELS: &str = "labels.csv";
pub const MANIFEST: &str = "manifest.json";

/// One coordinate of one particle at one node. `u` is empty at the final node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub solver: String,
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub i: usize,
    pub axis: usize,
    pub x: f64,
    pub r: f64,
    pub u: Option<f64>,
}

/// One solver iteration. `residual` and `update_norm` are sweep-only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub solver: String,
    pub n: usize,
    pub iteration: usize,
    pub cost: f64,
    pub residual: Option<f64>,
    pub update_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub solver: String,
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub i: usize,
    pub label: usize,
    pub value: f64,
}

/// A CSV file that remembers its path for error messages.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Table {
    pub fn create(dir: &Path, name: &str) -> Result<Self, CliError> {
        let path = dir.join(name);
        let writer = csv::Writer::from_path(&path).map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?;
        Ok(Table { path, writer })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<(), CliError> {
        self.writer.serialize(row).map_err(|source| CliError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|source| CliError::Io { path: self.path, source })
    }
}

/// Reads back any of the row types above.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}
