use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{EvalReport, TrainConfig};
use super::evaluate::evaluate;
use super::train::train;
use crate::dynamics::{Split, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Trains on the train split and reports test-split error.
pub fn train_and_evaluate(config: &TrainConfig, graph: &Graph, dataset: &TrajectoryDataset) -> Result<EvalReport> {
    let (model, log) = train(config, graph, dataset)?;
    let mut report = evaluate(&model, graph, dataset, Split::Test)?;
    report.seconds_per_iteration = log.seconds_per_iteration;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    Clusters,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "k" | "clusters" => Ok(SweepParam::Clusters),
            other => Err(Error::invalid(format!("cannot sweep `{other}` (gamma|k)"))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Clusters => "k",
        })
    }
}

impl SweepParam {
    pub fn apply(self, base: &TrainConfig, value: f64) -> Result<TrainConfig> {
        let mut c = base.clone();
        match self {
            SweepParam::Gamma => c.gamma = value,
            SweepParam::Clusters => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::invalid(format!("k must be a positive integer, got {value}")));
                }
                c.clusters = value as usize;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRun {
    pub value: f64,
    /// Error message when the run failed; the sweep carries on.
    pub outcome: std::result::Result<EvalReport, String>,
}

/// Independent runs over `values`, sharing graph, data and seeds. Runs are
/// spread over up to `threads` workers; results keep the input order.
pub fn sweep(
    base: &TrainConfig,
    param: SweepParam,
    values: &[f64],
    graph: &Graph,
    dataset: &TrajectoryDataset,
    threads: usize,
) -> Vec<SweepRun> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SweepRun>>> = Mutex::new(vec![None; values.len()]);
    let workers = threads.clamp(1, values.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&value) = values.get(i) else { break };
                let outcome = param
                    .apply(base, value)
                    .and_then(|c| train_and_evaluate(&c, graph, dataset))
                    .map_err(|e| e.to_string());
                slots.lock().expect("sweep slots")[i] = Some(SweepRun { value, outcome });
            });
        }
    });
    slots
        .into_inner()
        .expect("sweep slots")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
