use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AssignmentKind, TrainConfig};
use super::model::{shuffled, DiskNet};
use crate::diffprog::{Adam, Matrix, ParamId, Tape};
use crate::dynamics::{Split, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::skeleton::{entropy_loss, physics_init, pretrain_assignment, reconstruction_loss};

const STREAM_SHUFFLE: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    EndToEnd,
    FineTune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub epoch: usize,
    pub loss: f64,
    pub pred: f64,
    pub skeleton: f64,
    pub entropy: f64,
    pub reconstruction: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Assignment pretraining loss per iteration.
    pub pretrain: Vec<f64>,
    pub epochs: Vec<EpochLog>,
    /// Mean wall-clock seconds per optimizer step in the end-to-end phase.
    pub seconds_per_iteration: f64,
}

struct BatchLosses {
    total: f64,
    pred: f64,
    skeleton: f64,
    entropy: f64,
    reconstruction: f64,
}

/// Embedding, physics-informed pretraining, end-to-end training and
/// refiner fine-tuning, in that order.
pub fn train(config: &TrainConfig, graph: &Graph, dataset: &TrajectoryDataset) -> Result<(DiskNet, TrainingLog)> {
    if graph.node_count() != dataset.node_count() {
        return Err(Error::invalid(format!(
            "graph has {} nodes, trajectory {}",
            graph.node_count(),
            dataset.node_count()
        )));
    }
    if (config.lookback, config.horizon) != (dataset.lookback, dataset.horizon) {
        return Err(Error::invalid(format!(
            "config windows {}/{} differ from dataset windows {}/{}",
            config.lookback, config.horizon, dataset.lookback, dataset.horizon
        )));
    }
    let mut config = config.clone();
    config.model_dt.get_or_insert(dataset.observed.dt);
    let config = &config;
    let mut model = DiskNet::new(config, graph, dataset.dim())?;
    let mut log = TrainingLog::default();

    if config.physics_init && config.assignment == AssignmentKind::Learned {
        let p0 = physics_init(&model.embedding, config.gamma)?.p0;
        let assignment = model.assignment.as_ref().expect("learned assignment");
        log.pretrain = pretrain_assignment(
            assignment,
            &mut model.params,
            &p0,
            config.pretrain_iters,
            config.pretrain_lr,
            config.gradient_scale,
        )?;
    }

    let windows = dataset.windows(Split::Train);
    if windows.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.stream(STREAM_SHUFFLE));

    let all = model.trainable_ids();
    let mut adam = Adam::new(config.learning_rate);
    let mut steps = 0usize;
    let mut step_time = 0.0;
    for epoch in 0..config.epochs {
        let t0 = Instant::now();
        let sums = run_epoch(&mut model, graph, dataset, &windows, &mut rng, &mut adam, &all, Phase::EndToEnd)?;
        let seconds = t0.elapsed().as_secs_f64();
        steps += sums.1;
        step_time += seconds;
        log.epochs.push(epoch_log(Phase::EndToEnd, epoch, sums, seconds));
    }
    log.seconds_per_iteration = if steps > 0 { step_time / steps as f64 } else { 0.0 };

    let refiners = model.refiner_ids();
    let mut adam = Adam::new(config.learning_rate);
    for epoch in 0..config.finetune_epochs {
        let t0 = Instant::now();
        let sums = run_epoch(&mut model, graph, dataset, &windows, &mut rng, &mut adam, &refiners, Phase::FineTune)?;
        log.epochs.push(epoch_log(Phase::FineTune, epoch, sums, t0.elapsed().as_secs_f64()));
    }
    Ok((model, log))
}

fn epoch_log(phase: Phase, epoch: usize, (sum, count): (BatchLosses, usize), seconds: f64) -> EpochLog {
    let c = count.max(1) as f64;
    EpochLog {
        phase,
        epoch,
        loss: sum.total / c,
        pred: sum.pred / c,
        skeleton: sum.skeleton / c,
        entropy: sum.entropy / c,
        reconstruction: sum.reconstruction / c,
        seconds,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    model: &mut DiskNet,
    graph: &Graph,
    dataset: &TrajectoryDataset,
    windows: &[usize],
    rng: &mut ChaCha8Rng,
    adam: &mut Adam,
    trainable: &[ParamId],
    phase: Phase,
) -> Result<(BatchLosses, usize)> {
    let order = shuffled(windows.len(), rng);
    let mut sum = BatchLosses {
        total: 0.0,
        pred: 0.0,
        skeleton: 0.0,
        entropy: 0.0,
        reconstruction: 0.0,
    };
    let mut count = 0;
    for chunk in order.chunks(model.config.batch_size) {
        let starts: Vec<usize> = chunk.iter().map(|&i| windows[i]).collect();
        let losses = train_step(model, graph, dataset, &starts, adam, trainable, phase).map_err(|e| match e {
            Error::NonFinite { context, .. } => Error::NonFinite {
                step: adam.steps_taken() as usize,
                context: format!("{phase:?} training: {context}"),
            },
            other => other,
        })?;
        sum.total += losses.total;
        sum.pred += losses.pred;
        sum.skeleton += losses.skeleton;
        sum.entropy += losses.entropy;
        sum.reconstruction += losses.reconstruction;
        count += 1;
    }
    Ok((sum, count))
}

fn train_step(
    model: &mut DiskNet,
    graph: &Graph,
    dataset: &TrajectoryDataset,
    starts: &[usize],
    adam: &mut Adam,
    trainable: &[ParamId],
    phase: Phase,
) -> Result<BatchLosses> {
    let cfg = model.config.clone();
    let batch = starts.len();
    let mut tape = Tape::new();
    let mask: Vec<bool> = {
        let mut m = vec![false; model.params.len()];
        trainable.iter().for_each(|id| m[id.index()] = true);
        m
    };
    let bound = model.params.bind_where(&mut tape, |id| mask[id.index()]);
    let inputs = tape.constant(model.stack_inputs(dataset, starts));
    let targets = tape.constant(model.stack_targets(dataset, starts));
    let fwd = model.forward(&mut tape, &bound, graph, inputs, batch)?;
    let pred = tape.mse(fwd.prediction, targets);
    let mut losses = BatchLosses {
        total: 0.0,
        pred: tape.value(pred).item(),
        skeleton: 0.0,
        entropy: 0.0,
        reconstruction: 0.0,
    };
    let mut total = pred;
    if phase == Phase::EndToEnd {
        if cfg.alpha_skeleton > 0.0 {
            let p = tape.value(fwd.assignment).clone();
            let target = tape.constant(model.skeleton_targets(dataset, &p, starts)?);
            let ls = tape.mse(fwd.latent, target);
            losses.skeleton = tape.value(ls).item();
            total = tape.add_scaled(total, ls, cfg.alpha_skeleton);
        }
        if model.assignment.is_some() {
            let le = entropy_loss(&mut tape, fwd.assignment);
            let lr = reconstruction_loss(&mut tape, fwd.assignment, model.graph_adjacency());
            losses.entropy = tape.value(le).item();
            losses.reconstruction = tape.value(lr).item();
            total = tape.add_scaled(total, le, cfg.alpha_entropy);
            total = tape.add_scaled(total, lr, cfg.alpha_reconstruction);
        }
    }
    losses.total = tape.value(total).item();
    if !losses.total.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            context: format!(
                "loss {} (pred {}, skeleton {}, entropy {}, reconstruction {})",
                losses.total, losses.pred, losses.skeleton, losses.entropy, losses.reconstruction
            ),
        });
    }
    let mut grads = tape.backward(total);
    let mut g = bound.gradients(&mut grads);
    drop(tape);
    if let Some(assignment) = &model.assignment {
        assignment.scale_gradient(&model.params, &mut g, cfg.gradient_scale);
    }
    adam.step(&mut model.params, &g);
    if let Some(assignment) = &model.assignment {
        assignment.clip_points(&mut model.params);
    }
    Ok(losses)
}

/// Mean of the batch losses over one pass of the training windows without
/// updating anything; used by tests and diagnostics.
pub fn training_loss(model: &DiskNet, graph: &Graph, dataset: &TrajectoryDataset) -> Result<f64> {
    let windows = dataset.windows(Split::Train);
    let mut total = 0.0;
    let mut count = 0;
    for chunk in windows.chunks(model.config.batch_size) {
        let pred = model.predict(graph, dataset, chunk)?;
        let target = model.stack_targets(dataset, chunk);
        let mse = mse(&pred, &target);
        total += mse;
        count += 1;
    }
    Ok(total / count.max(1) as f64)
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}
