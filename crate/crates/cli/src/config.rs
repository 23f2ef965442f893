//! The run file: `[graph]`, `[dynamics]`, `[dataset]`, `[model]`, `[train]`
//! and `[eval]` tables.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use disknet::diffprog::Activation;
use disknet::dynamics::{DynamicsKind, OBSERVATIONS};
use disknet::hyperbolic::GradientScale;
use disknet::pipeline::{AssignmentKind, TrainConfig};
use disknet::skeleton_ode::Solver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Ba,
    Ws,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub kind: GraphKind,
    pub n: usize,
    /// Edges per new node (BA).
    pub m: usize,
    /// Ring degree (WS).
    pub k: usize,
    /// Rewiring probability (WS).
    pub p: f64,
    pub seed: u64,
    /// Edge list, for `kind = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            kind: GraphKind::Ba,
            n: 200,
            m: 3,
            k: 4,
            p: 0.1,
            seed: 0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub kind: DynamicsKind,
    /// Seeds the initial state and, for Rössler, the node frequencies.
    pub seed: u64,
    /// Observed trajectory to use instead of simulating.
    pub path: Option<PathBuf>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            kind: DynamicsKind::FitzHughNagumo,
            seed: 0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub observations: usize,
    pub lookback: usize,
    pub horizon: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        DatasetSection {
            observations: OBSERVATIONS,
            lookback: t.lookback,
            horizon: t.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    pub clusters: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    pub assignment_hidden: usize,
    pub solver: Solver,
    pub model_dt: Option<f64>,
    pub assignment: AssignmentKind,
    pub physics_init: bool,
    pub gradient_scale: GradientScale,
    pub refiner_output: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelSection {
            gamma: t.gamma,
            clusters: t.clusters,
            hidden: t.hidden,
            latent_dim: t.latent_dim,
            assignment_hidden: t.assignment_hidden,
            solver: t.solver,
            model_dt: t.model_dt,
            assignment: t.assignment,
            physics_init: t.physics_init,
            gradient_scale: t.gradient_scale,
            refiner_output: t.refiner_output,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub alpha_skeleton: f64,
    pub alpha_entropy: f64,
    pub alpha_reconstruction: f64,
    pub pretrain_iters: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            alpha_skeleton: t.alpha_skeleton,
            alpha_entropy: t.alpha_entropy,
            alpha_reconstruction: t.alpha_reconstruction,
            pretrain_iters: t.pretrain_iters,
            pretrain_lr: t.pretrain_lr,
            finetune_epochs: t.finetune_epochs,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: EvalSplit,
    /// Worker threads for sweeps.
    pub threads: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            split: EvalSplit::Test,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSection,
    pub dynamics: DynamicsSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        // relative data paths are taken from the config's directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.graph.path, &mut config.dynamics.path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let (m, t, d) = (&self.model, &self.train, &self.dataset);
        let config = TrainConfig {
            gamma: m.gamma,
            clusters: m.clusters,
            lookback: d.lookback,
            horizon: d.horizon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            alpha_skeleton: t.alpha_skeleton,
            alpha_entropy: t.alpha_entropy,
            alpha_reconstruction: t.alpha_reconstruction,
            hidden: m.hidden,
            latent_dim: m.latent_dim,
            assignment_hidden: m.assignment_hidden,
            solver: m.solver,
            model_dt: m.model_dt,
            physics_init: m.physics_init,
            pretrain_iters: t.pretrain_iters,
            pretrain_lr: t.pretrain_lr,
            finetune_epochs: t.finetune_epochs,
            assignment: m.assignment,
            gradient_scale: m.gradient_scale,
            refiner_output: m.refiner_output,
            seed: t.seed,
        };
        config.validate()?;
        if self.eval.threads == 0 {
            bail!(invalid("eval.threads must be positive"));
        }
        Ok(config)
    }
}

/// Marks a message as a validation failure (exit code 2).
pub fn invalid(msg: impl Into<String>) -> disknet::Error {
    disknet::Error::InvalidArgument(msg.into())
}
