//! Append-only run store: one JSON record per run plus CSV artifacts in a
//! per-run directory, both keyed by the run id (a content hash of the
//! command, the configuration document, and the effective seed).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Persistent record of one command invocation.  Timestamps live here, not
/// in the CSV artifacts, so identical (config, seed) reruns reproduce the
/// artifacts byte for byte.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    /// compact grouping key derived from the family section
    pub family_id: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// the full configuration document as parsed
    pub config: serde_json::Value,
    /// command-specific reports (solver, hypothesis checks, sweeps)
    pub reports: serde_json::Value,
    /// artifact paths relative to the store directory
    pub artifacts: Vec<String>,
    /// named hypothesis violations; non-empty means exit status 1
    pub violations: Vec<String>,
    pub exit_status: i32,
}

/// Content hash identifying a run: command name, canonical configuration
/// JSON (serde_json serializes object keys in sorted order), and the
/// effective seed.
pub fn run_id(command: &str, config: &serde_json::Value, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update([0u8]);
    hasher.update(config.to_string().as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Compact grouping key for the family section: its kind plus a short hash
/// of the full section.
pub fn family_id(config: &serde_json::Value) -> String {
    let section = config.get("family").cloned().unwrap_or(serde_json::Value::Null);
    let kind = section
        .get("kind")
        .and_then(|k| k.as_str())
        .unwrap_or("unknown")
        .to_string();
    let mut hasher = Sha256::new();
    hasher.update(section.to_string().as_bytes());
    let digest = hasher.finalize();
    let short: String = digest.iter().take(5).map(|b| format!("{b:02x}")).collect();
    format!("{kind}-{short}")
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// One CSV cell; numbers are written with 17 significant digits.
#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Num(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Cell {
        Cell::Text(x.to_string())
    }
}
impl From<String> for Cell {
    fn from(x: String) -> Cell {
        Cell::Text(x)
    }
}

/// 17 significant digits in scientific notation, stable across platforms.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

fn render_cell(cell: &Cell) -> String {
    match cell {
        Cell::Num(x) => fmt_sig(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) => {
            if s.contains(',') || s.contains('"') || s.contains('\n') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
    }
}

pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Store, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::Usage(format!("cannot create run store {}: {e}", dir.display()))
        })?;
        Ok(Store { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record_path(&self, run_id: &str) -> PathBuf {
        self.dir.join(format!("{run_id}.json"))
    }

    pub fn write_record(&self, record: &RunRecord) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(record)
            .map_err(|e| CliError::Failure(format!("cannot serialize run record: {e}")))?;
        fs::write(self.record_path(&record.run_id), text)
            .map_err(|e| CliError::Failure(format!("cannot write run record: {e}")))
    }

    pub fn load_record(&self, run_id: &str) -> Result<RunRecord, CliError> {
        let path = self.record_path(run_id);
        let text = fs::read_to_string(&path)
            .map_err(|_| CliError::Failure(format!("unknown run id: {run_id}")))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Failure(format!("corrupt run record {run_id}: {e}")))
    }

    /// Write one CSV artifact under the run's directory; returns the path
    /// relative to the store root.
    pub fn write_csv(
        &self,
        run_id: &str,
        name: &str,
        header: &[&str],
        rows: &[Vec<Cell>],
    ) -> Result<String, CliError> {
        let run_dir = self.dir.join(run_id);
        fs::create_dir_all(&run_dir).map_err(|e| {
            CliError::Failure(format!("cannot create artifact directory: {e}"))
        })?;
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            let line: Vec<String> = row.iter().map(render_cell).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        let file = run_dir.join(name);
        fs::write(&file, text)
            .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", file.display())))?;
        Ok(format!("{run_id}/{name}"))
    }
}
