//! The assembled forecaster: assignment, aggregation, latent ODE and
//! refiners over one graph.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AssignmentKind, TrainConfig};
use crate::diffprog::{gcn_normalized_adjacency, row_normalized_with_self_loops, Bound, Csr, Matrix, ParamId, ParamSet, Tape, Var};
use crate::dynamics::{Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::graph::{betweenness, Graph};
use crate::hyperbolic::{clip, embed_topology, from_polar, EmbeddingSet, PoincarePoint, R_MAX};
use crate::skeleton::{
    adjacency_csr, physics_init, skeleton_adjacency, super_count, Aggregator, AssignmentMatrix, AssignmentModel,
};
use crate::skeleton_ode::SkeletonOde;
use crate::superres::{cluster_by_degree, expand, RefinerBank};

const STREAM_INIT: u64 = 1;
const STREAM_CLUSTER: u64 = 2;
const STREAM_BASELINE: u64 = 3;
const STREAM_POINTS: u64 = 4;

/// Fixed assignment used by the comparison variants. With `γ = 1` every
/// kind returns the identity.
pub fn baseline_assignment(
    kind: AssignmentKind,
    graph: &Graph,
    embedding: &EmbeddingSet,
    gamma: f64,
    seed: u64,
) -> Result<AssignmentMatrix> {
    let n = graph.node_count();
    let s = super_count(n, gamma)?;
    if s == n {
        return Ok(AssignmentMatrix::from_hard((0..n).collect(), n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hard = match kind {
        AssignmentKind::Learned => {
            return Err(Error::invalid("learned assignment has no fixed baseline"));
        }
        AssignmentKind::StaticRg => return Ok(physics_init(embedding, gamma)?.p0),
        AssignmentKind::Random => (0..n).map(|_| rng.random_range(0..s)).collect(),
        AssignmentKind::Degree | AssignmentKind::Betweenness => {
            let score: Vec<f64> = match kind {
                AssignmentKind::Degree => graph.degrees().iter().map(|&d| d as f64).collect(),
                _ => betweenness(graph),
            };
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
            let mut hard = vec![usize::MAX; n];
            for (slot, &node) in order.iter().take(s).enumerate() {
                hard[node] = slot;
            }
            for h in hard.iter_mut().filter(|h| **h == usize::MAX) {
                *h = rng.random_range(0..s);
            }
            hard
        }
    };
    Ok(AssignmentMatrix::from_hard(hard, s))
}

/// Output of one forward pass over a batch of windows.
pub struct Forward {
    /// `(B·N) x (H·d)` normalized predictions.
    pub prediction: Var,
    /// `(B·S) x (H·h_z)` latent trajectory, steps concatenated.
    pub latent: Var,
    /// Soft assignment `S x N`.
    pub assignment: Var,
    pub hard: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DiskNet {
    pub config: TrainConfig,
    pub params: ParamSet,
    pub embedding: EmbeddingSet,
    pub assignment: Option<AssignmentModel>,
    pub fixed: Option<AssignmentMatrix>,
    pub aggregator: Aggregator,
    pub ode: SkeletonOde,
    pub refiners: RefinerBank,
    pub node_count: usize,
    pub dim: usize,
    pub super_count: usize,
    gcn_adjacency: Csr,
    pub(crate) adjacency: Arc<Csr>,
}

impl DiskNet {
    /// Builds an untrained model. With `physics_init` the super points
    /// start at the angular chunk means; otherwise uniformly in the disk.
    pub fn new(config: &TrainConfig, graph: &Graph, dim: usize) -> Result<Self> {
        config.validate()?;
        let n = graph.node_count();
        let s = super_count(n, config.gamma)?;
        let mut embedding = embed_topology(graph);
        let mut rng = ChaCha8Rng::seed_from_u64(config.stream(STREAM_INIT));
        let mut params = ParamSet::new();

        let (assignment, fixed) = match config.assignment {
            AssignmentKind::Learned => {
                let points: Vec<PoincarePoint> = if config.physics_init {
                    physics_init(&embedding, config.gamma)?.super_points
                } else {
                    let mut prng = ChaCha8Rng::seed_from_u64(config.stream(STREAM_POINTS));
                    (0..s)
                        .map(|_| {
                            let r = R_MAX * prng.random_range(0.0f64..1.0).sqrt();
                            from_polar(r, prng.random_range(0.0..std::f64::consts::TAU))
                        })
                        .collect()
                };
                embedding.super_points = points.clone();
                let model = AssignmentModel::new(
                    &mut params,
                    &embedding,
                    &points,
                    config.gamma,
                    config.assignment_hidden,
                    &mut rng,
                )?;
                (Some(model), None)
            }
            kind => {
                let fixed = baseline_assignment(kind, graph, &embedding, config.gamma, config.stream(STREAM_BASELINE))?;
                (None, Some(fixed))
            }
        };

        let input = config.lookback * dim;
        let aggregator = Aggregator::new(&mut params, input, config.hidden, &mut rng);
        let ode = SkeletonOde::new(&mut params, config.hidden, config.hidden, config.latent_dim, &mut rng);
        let clustering = cluster_by_degree(graph, config.clusters, config.stream(STREAM_CLUSTER))?;
        let refiners = RefinerBank::new(
            &mut params,
            clustering,
            input,
            config.horizon * config.latent_dim,
            config.hidden,
            config.horizon * dim,
            config.refiner_output,
            &mut rng,
        );
        Ok(DiskNet {
            config: config.clone(),
            params,
            embedding,
            assignment,
            fixed,
            aggregator,
            ode,
            refiners,
            node_count: n,
            dim,
            super_count: s,
            gcn_adjacency: gcn_normalized_adjacency(graph),
            adjacency: Arc::new(adjacency_csr(graph)),
        })
    }

    pub fn graph_adjacency(&self) -> &Arc<Csr> {
        &self.adjacency
    }

    /// Parameters updated in the end-to-end phase.
    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.params.ids().collect()
    }

    pub fn refiner_ids(&self) -> Vec<ParamId> {
        self.refiners.param_ids()
    }

    /// Parameters the skeleton-target pass reads.
    pub(crate) fn encoder_path_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.aggregator.gcn.weight()];
        ids.extend(self.ode.encoder.param_ids());
        ids
    }

    /// Current soft/hard assignment.
    pub fn current_assignment(&self) -> Result<AssignmentMatrix> {
        match (&self.assignment, &self.fixed) {
            (Some(model), _) => model.compute(&self.params),
            (None, Some(fixed)) => Ok(fixed.clone()),
            (None, None) => Err(Error::invalid("model has no assignment")),
        }
    }

    pub(crate) fn assignment_var(&self, tape: &mut Tape, bound: &Bound) -> Result<Var> {
        match (&self.assignment, &self.fixed) {
            (Some(model), _) => model.forward(tape, bound),
            (None, Some(fixed)) => Ok(tape.constant(fixed.soft.clone())),
            (None, None) => Err(Error::invalid("model has no assignment")),
        }
    }

    /// Row-normalized skeleton adjacency for a hard assignment.
    pub fn skeleton_operator(&self, graph: &Graph, hard: &[usize]) -> Csr {
        row_normalized_with_self_loops(&skeleton_adjacency(hard, self.super_count, graph))
    }

    /// Stacks the lookback inputs of `starts` into `(B·N) x (L·d)`.
    pub fn stack_inputs(&self, dataset: &TrajectoryDataset, starts: &[usize]) -> Matrix {
        let cols = self.config.lookback * self.dim;
        let mut data = Vec::with_capacity(starts.len() * self.node_count * cols);
        for &s in starts {
            data.extend(dataset.input_window(s));
        }
        Matrix {
            rows: starts.len() * self.node_count,
            cols,
            data,
        }
    }

    pub fn stack_targets(&self, dataset: &TrajectoryDataset, starts: &[usize]) -> Matrix {
        let cols = self.config.horizon * self.dim;
        let mut data = Vec::with_capacity(starts.len() * self.node_count * cols);
        for &s in starts {
            data.extend(dataset.target_window(s));
        }
        Matrix {
            rows: starts.len() * self.node_count,
            cols,
            data,
        }
    }

    pub(crate) fn gcn_operator(&self, copies: usize) -> Arc<Csr> {
        Arc::new(self.gcn_adjacency.block_diag(copies))
    }

    /// Full forward pass for `batch` stacked windows.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, graph: &Graph, inputs: Var, batch: usize) -> Result<Forward> {
        let p = self.assignment_var(tape, bound)?;
        let hard = AssignmentMatrix::from_soft(tape.value(p).clone()).hard;
        let skeleton = Arc::new(self.skeleton_operator(graph, &hard).block_diag(batch));
        let xs = self.aggregator.forward(tape, bound, &self.gcn_operator(batch), p, inputs, batch)?;
        let z0 = self.ode.encode(tape, bound, xs)?;
        let steps = self.ode.integrate(
            tape,
            bound,
            &skeleton,
            z0,
            self.config.horizon,
            self.config.model_dt.unwrap_or(1.0),
            self.config.solver,
        )?;
        let latent = tape.concat_cols(&steps);
        let expanded = expand(tape, latent, &hard, self.super_count, batch);
        let prediction = self.refiners.forward(tape, bound, inputs, expanded, batch)?;
        Ok(Forward {
            prediction,
            latent,
            assignment: p,
            hard,
        })
    }

    /// Skeleton targets for each window: the encoder applied to the
    /// aggregation of the lookback window ending at every horizon step,
    /// laid out like [`Forward::latent`]. No gradient flows through them.
    pub fn skeleton_targets(&self, dataset: &TrajectoryDataset, p: &Matrix, starts: &[usize]) -> Result<Matrix> {
        let h = self.config.horizon;
        let hz = self.config.latent_dim;
        let s = self.super_count;
        let ids = self.encoder_path_ids();
        // overlapping windows share most shifted starts
        let mut shifted: Vec<usize> = starts.iter().flat_map(|&t| (1..=h).map(move |j| t + j)).collect();
        shifted.sort_unstable();
        shifted.dedup();
        let mut encoded: HashMap<usize, usize> = HashMap::with_capacity(shifted.len());
        let mut latents = Matrix::zeros(shifted.len() * s, hz);
        for (c, chunk) in shifted.chunks(h).enumerate() {
            let mut tape = Tape::new();
            let bound = self.params.bind_only(&mut tape, &ids, false);
            let x = tape.constant(self.stack_inputs(dataset, chunk));
            let pv = tape.constant(p.clone());
            let xs = self.aggregator.forward(&mut tape, &bound, &self.gcn_operator(chunk.len()), pv, x, chunk.len())?;
            let z = self.ode.encode(&mut tape, &bound, xs)?;
            let base = c * h * s * hz;
            latents.data[base..base + chunk.len() * s * hz].copy_from_slice(&tape.value(z).data);
            for (i, &t) in chunk.iter().enumerate() {
                encoded.insert(t, c * h + i);
            }
        }
        let mut out = Matrix::zeros(starts.len() * s, h * hz);
        for (b, &start) in starts.iter().enumerate() {
            for j in 0..h {
                let block = encoded[&(start + j + 1)];
                for r in 0..s {
                    let dst = (b * s + r) * h * hz + j * hz;
                    out.data[dst..dst + hz].copy_from_slice(latents.row(block * s + r));
                }
            }
        }
        Ok(out)
    }

    /// Normalized predictions `(B·N) x (H·d)` without recording gradients.
    pub fn predict(&self, graph: &Graph, dataset: &TrajectoryDataset, starts: &[usize]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.params.bind_where(&mut tape, |_| false);
        let x = tape.constant(self.stack_inputs(dataset, starts));
        let out = self.forward(&mut tape, &bound, graph, x, starts.len())?;
        Ok(tape.value(out.prediction).clone())
    }

    /// Latent skeleton trajectory of the window at `start`: `S` nodes over
    /// `H` steps of `h_z` values.
    pub fn latent_trajectory(&self, graph: &Graph, dataset: &TrajectoryDataset, start: usize) -> Result<Trajectory> {
        let mut tape = Tape::new();
        let bound = self.params.bind_where(&mut tape, |_| false);
        let x = tape.constant(self.stack_inputs(dataset, &[start]));
        let out = self.forward(&mut tape, &bound, graph, x, 1)?;
        let z = tape.value(out.latent);
        let (h, hz) = (self.config.horizon, self.config.latent_dim);
        let mut traj = Trajectory::zeros(self.super_count, h, hz, self.config.model_dt.unwrap_or(1.0));
        // rows are super-nodes with steps concatenated, the trajectory layout
        traj.data.copy_from_slice(&z.data[..self.super_count * h * hz]);
        Ok(traj)
    }

    /// Clipped super points of the learned assignment.
    pub fn super_points(&self) -> Vec<PoincarePoint> {
        match &self.assignment {
            Some(model) => model.super_points(&self.params).into_iter().map(clip).collect(),
            None => Vec::new(),
        }
    }
}

/// Random permutation of `0..n`, used for epoch shuffling.
pub(crate) fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}
