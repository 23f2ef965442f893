use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EvalReport, TrainConfig};
use crate::error::Result;

/// Writes `run_id,horizon_step,mae` rows, steps counted from 1.
pub fn write_metrics_csv<'a>(mut out: impl Write, runs: impl IntoIterator<Item = (&'a str, &'a EvalReport)>) -> Result<()> {
    writeln!(out, "run_id,horizon_step,mae")?;
    for (id, report) in runs {
        for (j, mae) in report.per_step_mae.iter().enumerate() {
            writeln!(out, "{id},{},{mae}", j + 1)?;
        }
    }
    Ok(())
}

/// Object hash of `bytes` in the style of `git hash-object`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash over several named inputs, order-sensitive.
pub fn inputs_hash<'a>(inputs: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in inputs {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(content_hash(bytes).as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub mean_mae: f64,
    pub occupancy: f64,
    pub seconds_per_iteration: f64,
    pub windows: usize,
    pub config: TrainConfig,
    pub inputs_hash: String,
}

impl Summary {
    pub fn new(run_id: impl Into<String>, report: &EvalReport, config: &TrainConfig, inputs_hash: String) -> Self {
        Summary {
            run_id: run_id.into(),
            mean_mae: report.mean_mae,
            occupancy: report.occupancy,
            seconds_per_iteration: report.seconds_per_iteration,
            windows: report.windows,
            config: config.clone(),
            inputs_hash,
        }
    }
}
