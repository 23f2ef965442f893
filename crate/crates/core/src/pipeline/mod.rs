//! Training orchestration, evaluation, baselines and sweeps.

mod config;
mod evaluate;
mod model;
mod report;
mod store;
mod sweep;
mod train;

pub use config::{AssignmentKind, EvalReport, TrainConfig};
pub use evaluate::{evaluate, persistence_baseline, MaeAccumulator};
pub use model::{baseline_assignment, DiskNet, Forward};
pub use report::{content_hash, inputs_hash, write_metrics_csv, Summary};
pub use store::{load_model, save_model, Manifest, MODEL_FORMAT_VERSION};
pub use sweep::{sweep, train_and_evaluate, SweepParam, SweepRun};
pub use train::{train, training_loss, EpochLog, Phase, TrainingLog};
