use super::config::EvalReport;
use super::model::DiskNet;
use crate::diffprog::Matrix;
use crate::dynamics::{Split, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Accumulates absolute errors per horizon step in physical units.
#[derive(Debug, Clone)]
pub struct MaeAccumulator {
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl MaeAccumulator {
    pub fn new(horizon: usize) -> Self {
        MaeAccumulator {
            sums: vec![0.0; horizon],
            counts: vec![0; horizon],
        }
    }

    /// Adds one window: `prediction` is `N x (H·d)` in normalized units,
    /// compared against the observed frames after the lookback.
    pub fn add_window(&mut self, dataset: &TrajectoryDataset, start: usize, prediction: &[f64]) {
        let d = dataset.dim();
        let h = self.sums.len();
        let first = start + dataset.lookback;
        for node in 0..dataset.node_count() {
            let row = &prediction[node * h * d..(node + 1) * h * d];
            for j in 0..h {
                for k in 0..d {
                    let pred = dataset.denormalize_value(k, row[j * d + k]);
                    let truth = dataset.observed.get(node, first + j, k);
                    self.sums[j] += (pred - truth).abs();
                }
                self.counts[j] += d;
            }
        }
    }

    pub fn per_step(&self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }
}

/// Per-step MAE of the model over the windows of `split`.
pub fn evaluate(model: &DiskNet, graph: &Graph, dataset: &TrajectoryDataset, split: Split) -> Result<EvalReport> {
    let windows = dataset.windows(split);
    if windows.is_empty() {
        return Err(Error::invalid(format!("no {split:?} windows to evaluate")));
    }
    let h = dataset.horizon;
    let d = dataset.dim();
    let n = dataset.node_count();
    let mut acc = MaeAccumulator::new(h);
    for chunk in windows.chunks(model.config.batch_size) {
        let pred: Matrix = model.predict(graph, dataset, chunk)?;
        for (b, &start) in chunk.iter().enumerate() {
            acc.add_window(dataset, start, &pred.data[b * n * h * d..(b + 1) * n * h * d]);
        }
    }
    let occupancy = model.current_assignment()?.occupancy();
    Ok(EvalReport::from_per_step(acc.per_step(), occupancy, 0.0, windows.len()))
}

/// Holds the last lookback frame constant over the horizon.
pub fn persistence_baseline(dataset: &TrajectoryDataset, split: Split) -> Result<EvalReport> {
    let windows = dataset.windows(split);
    if windows.is_empty() {
        return Err(Error::invalid(format!("no {split:?} windows to evaluate")));
    }
    let h = dataset.horizon;
    let d = dataset.dim();
    let n = dataset.node_count();
    let mut acc = MaeAccumulator::new(h);
    let mut pred = vec![0.0; n * h * d];
    for &start in &windows {
        let last = start + dataset.lookback - 1;
        for node in 0..n {
            for j in 0..h {
                for k in 0..d {
                    pred[node * h * d + j * d + k] = dataset.norm(node, last, k);
                }
            }
        }
        acc.add_window(dataset, start, &pred);
    }
    Ok(EvalReport::from_per_step(acc.per_step(), 1.0, 0.0, windows.len()))
}
