//! Command implementations and the shared run pipeline: load + validate the
//! configuration, run the command body, persist the record, report the
//! exit status.

pub mod check;
pub mod counterexample;
pub mod hormander;
pub mod pdo;
pub mod report;
pub mod solve;

use std::fs;

use maxreg_core::config::{parse_config, BuiltModel};

use crate::store::{self, Cell, RunRecord, Store};
use crate::{CliError, RunArgs};

/// Everything a command body needs.
pub struct RunContext {
    pub model: BuiltModel,
    pub config_value: serde_json::Value,
    pub seed: u64,
    pub run_id: String,
    pub family_id: String,
    pub store: Store,
}

/// What a command body produces; the pipeline persists it.
pub struct CommandOutput {
    pub reports: serde_json::Value,
    pub artifacts: Vec<String>,
    pub violations: Vec<String>,
}

/// Load the configuration, apply the seed override, build the model, run
/// the body, persist the run record, and map violations to the exit code.
pub fn dispatch(
    command: &str,
    args: &RunArgs,
    body: fn(&mut RunContext) -> Result<CommandOutput, CliError>,
) -> Result<u8, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut config = parse_config(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let seed = config.seed;
    // canonical document with the effective seed, for hashing and the record
    let config_value = serde_json::to_value(&config)
        .map_err(|e| CliError::Usage(format!("cannot canonicalize config: {e}")))?;
    let model = config.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let run_id = store::run_id(command, &config_value, seed);
    let family_id = store::family_id(&config_value);
    let store = Store::open(&args.out)?;

    let started = store::now_unix_ms();
    let mut ctx = RunContext { model, config_value, seed, run_id, family_id, store };
    let output = body(&mut ctx)?;
    let finished = store::now_unix_ms();

    let exit_status = i32::from(!output.violations.is_empty());
    let record = RunRecord {
        run_id: ctx.run_id.clone(),
        command: command.to_string(),
        family_id: ctx.family_id.clone(),
        seed,
        started_unix_ms: started,
        finished_unix_ms: finished,
        config: ctx.config_value.clone(),
        reports: output.reports,
        artifacts: output.artifacts,
        violations: output.violations.clone(),
        exit_status,
    };
    ctx.store.write_record(&record)?;

    println!("run {}", ctx.run_id);
    for path in &record.artifacts {
        println!("artifact {}", ctx.store.dir().join(path).display());
    }
    if output.violations.is_empty() {
        println!("{command}: ok");
        Ok(0)
    } else {
        for v in &output.violations {
            println!("{command}: violated: {v}");
        }
        Ok(1)
    }
}

/// Uniform time samples over [0, tau], endpoints included.
pub fn time_samples(tau: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| tau * k as f64 / count as f64).collect()
}

/// Key/value rows for a constants table.
pub fn kv_rows(pairs: &[(&str, f64)]) -> Vec<Vec<Cell>> {
    pairs
        .iter()
        .map(|(k, v)| vec![Cell::from(*k), Cell::from(*v)])
        .collect()
}

/// Convert a core error in a post-validation phase to exit status 1.
pub fn failure(e: maxreg_core::Error) -> CliError {
    CliError::Failure(e.to_string())
}
