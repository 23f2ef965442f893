use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffprog::Activation;
use crate::error::{Error, Result};
use crate::hyperbolic::GradientScale;
use crate::skeleton_ode::Solver;

/// How node-to-super-node memberships are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentKind {
    /// Learned from hyperbolic embeddings.
    #[default]
    Learned,
    Random,
    Degree,
    Betweenness,
    /// Angular chunks of the embedding, frozen.
    StaticRg,
}

impl FromStr for AssignmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(AssignmentKind::Learned),
            "random" => Ok(AssignmentKind::Random),
            "degree" => Ok(AssignmentKind::Degree),
            "betweenness" => Ok(AssignmentKind::Betweenness),
            "static_rg" => Ok(AssignmentKind::StaticRg),
            other => Err(Error::invalid(format!(
                "unknown assignment `{other}` (learned|random|degree|betweenness|static_rg)"
            ))),
        }
    }
}

impl fmt::Display for AssignmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AssignmentKind::Learned => "learned",
            AssignmentKind::Random => "random",
            AssignmentKind::Degree => "degree",
            AssignmentKind::Betweenness => "betweenness",
            AssignmentKind::StaticRg => "static_rg",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Reduction ratio: super-nodes per node.
    pub gamma: f64,
    /// Degree clusters for the refiners.
    pub clusters: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub alpha_skeleton: f64,
    pub alpha_entropy: f64,
    pub alpha_reconstruction: f64,
    pub hidden: usize,
    pub latent_dim: usize,
    pub assignment_hidden: usize,
    pub solver: Solver,
    /// Model time per observation interval; unset means the data's own
    /// sampling interval.
    pub model_dt: Option<f64>,
    pub physics_init: bool,
    pub pretrain_iters: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    pub assignment: AssignmentKind,
    pub gradient_scale: GradientScale,
    pub refiner_output: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.5,
            clusters: 10,
            lookback: 12,
            horizon: 120,
            batch_size: 8,
            epochs: 50,
            learning_rate: 0.001,
            alpha_skeleton: 1.0,
            alpha_entropy: 0.1,
            alpha_reconstruction: 0.1,
            hidden: 64,
            latent_dim: 16,
            assignment_hidden: 128,
            solver: Solver::Rk4,
            model_dt: None,
            physics_init: true,
            pretrain_iters: 500,
            pretrain_lr: 0.005,
            finetune_epochs: 10,
            assignment: AssignmentKind::Learned,
            gradient_scale: GradientScale::LinearNorm,
            refiner_output: Activation::Identity,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("clusters", self.clusters),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
            ("latent_dim", self.latent_dim),
            ("assignment_hidden", self.assignment_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("pretrain_lr", self.pretrain_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        if let Some(dt) = self.model_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid("model_dt must be positive and finite"));
            }
        }
        for (name, v) in [
            ("alpha_skeleton", self.alpha_skeleton),
            ("alpha_entropy", self.alpha_entropy),
            ("alpha_reconstruction", self.alpha_reconstruction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Independent random stream seeds derived from the run seed.
    pub(crate) fn stream(&self, purpose: u64) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(purpose.wrapping_mul(0xD1B5_4A32_D192_ED03))
    }
}

/// Forecast error of one run on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean absolute error per horizon step, physical units.
    pub per_step_mae: Vec<f64>,
    pub mean_mae: f64,
    pub occupancy: f64,
    pub seconds_per_iteration: f64,
    pub windows: usize,
}

impl EvalReport {
    pub fn from_per_step(per_step_mae: Vec<f64>, occupancy: f64, seconds_per_iteration: f64, windows: usize) -> Self {
        let mean_mae = per_step_mae.iter().sum::<f64>() / per_step_mae.len().max(1) as f64;
        EvalReport {
            per_step_mae,
            mean_mae,
            occupancy,
            seconds_per_iteration,
            windows,
        }
    }
}
