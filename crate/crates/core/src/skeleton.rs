//! Node-to-super-node assignment, its auxiliary losses, state aggregation
//! and the coarse-grained skeleton adjacency.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::diffprog::{Activation, Adam, Bound, Csr, Gcn, Matrix, Mlp, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hyperbolic::{self, clip, log_map_origin, EmbeddingSet, GradientScale, PoincarePoint};

/// Number of super-nodes, `⌈γN⌉`.
pub fn super_count(node_count: usize, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("reduction ratio {gamma} outside (0, 1]")));
    }
    let raw = gamma * node_count as f64;
    if raw < 1.0 - 1e-9 {
        return Err(Error::invalid(format!(
            "gamma {gamma} with {node_count} nodes leaves no super-node"
        )));
    }
    // tolerate products like 0.07 * 100 = 7.000000000000001
    Ok(((raw - 1e-9).ceil() as usize).clamp(1, node_count))
}

/// Soft memberships (`S x N`, each column a distribution) and the hard
/// argmax per node.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    pub soft: Matrix,
    pub hard: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn from_soft(soft: Matrix) -> Self {
        let hard = (0..soft.cols)
            .map(|n| {
                let mut best = 0;
                for s in 1..soft.rows {
                    if soft.get(s, n) > soft.get(best, n) {
                        best = s;
                    }
                }
                best
            })
            .collect();
        AssignmentMatrix { soft, hard }
    }

    /// One-hot assignment.
    pub fn from_hard(hard: Vec<usize>, super_count: usize) -> Self {
        let mut soft = Matrix::zeros(super_count, hard.len());
        for (n, &s) in hard.iter().enumerate() {
            soft.set(s, n, 1.0);
        }
        AssignmentMatrix { soft, hard }
    }

    pub fn super_count(&self) -> usize {
        self.soft.rows
    }

    pub fn node_count(&self) -> usize {
        self.soft.cols
    }

    pub fn hard_matrix(&self) -> Matrix {
        AssignmentMatrix::from_hard(self.hard.clone(), self.super_count()).soft
    }

    /// Share of super-nodes that receive at least one node.
    pub fn occupancy(&self) -> f64 {
        occupancy_ratio(&self.hard, self.super_count())
    }

    /// Fraction of nodes whose hard assignment equals `other`'s.
    pub fn agreement(&self, other: &AssignmentMatrix) -> f64 {
        let same = self.hard.iter().zip(&other.hard).filter(|(a, b)| a == b).count();
        same as f64 / self.hard.len().max(1) as f64
    }
}

pub fn occupancy_ratio(hard: &[usize], super_count: usize) -> f64 {
    let mut used = vec![false; super_count];
    for &s in hard {
        used[s] = true;
    }
    used.iter().filter(|&&u| u).count() as f64 / super_count as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsInit {
    pub p0: AssignmentMatrix,
    pub super_points: Vec<PoincarePoint>,
}

/// Renormalization-style grouping: nodes sorted by angle are cut into
/// consecutive chunks, one per super-node; the last chunk takes the rest.
pub fn physics_init(embedding: &EmbeddingSet, gamma: f64) -> Result<PhysicsInit> {
    let n = embedding.node_count();
    let s = super_count(n, gamma)?;
    let chunk = ((1.0 / gamma).round() as usize).clamp(1, n / s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| embedding.angles[a].total_cmp(&embedding.angles[b]).then(a.cmp(&b)));
    let mut hard = vec![0; n];
    let mut sums = vec![[0.0, 0.0, 0.0]; s];
    for (rank, &node) in order.iter().enumerate() {
        let group = (rank / chunk).min(s - 1);
        hard[node] = group;
        let p = embedding.node_points[node];
        sums[group][0] += p[0];
        sums[group][1] += p[1];
        sums[group][2] += 1.0;
    }
    let super_points = sums.iter().map(|c| clip([c[0] / c[2], c[1] / c[2]])).collect();
    Ok(PhysicsInit {
        p0: AssignmentMatrix::from_hard(hard, s),
        super_points,
    })
}

/// Generator of the soft assignment: `softmax(MLP(log C_s) · MLP(log C)ᵀ)`
/// normalized over super-nodes.
#[derive(Debug, Clone)]
pub struct AssignmentModel {
    node_mlp: Mlp,
    super_mlp: Mlp,
    super_points: ParamId,
    node_tangent: Matrix,
    pub gamma: f64,
}

impl AssignmentModel {
    pub fn new(
        params: &mut ParamSet,
        embedding: &EmbeddingSet,
        super_points: &[PoincarePoint],
        gamma: f64,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let n = embedding.node_count();
        if super_points.len() != super_count(n, gamma)? {
            return Err(Error::shape(
                "AssignmentModel::new",
                format!("{} super points for gamma {gamma} and {n} nodes", super_points.len()),
            ));
        }
        let node_mlp = Mlp::new(params, "assign.node", &[2, hidden, hidden], Activation::Tanh, rng);
        let super_mlp = Mlp::new(params, "assign.super", &[2, hidden, hidden], Activation::Tanh, rng);
        let pts = Matrix {
            rows: super_points.len(),
            cols: 2,
            data: super_points.iter().flat_map(|p| clip(*p)).collect(),
        };
        let super_points = params.add("assign.super_points", pts);
        let node_tangent = Matrix {
            rows: n,
            cols: 2,
            data: embedding.node_points.iter().flat_map(|&p| log_map_origin(p)).collect(),
        };
        Ok(AssignmentModel {
            node_mlp,
            super_mlp,
            super_points,
            node_tangent,
            gamma,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_tangent.rows
    }

    pub fn super_points_id(&self) -> ParamId {
        self.super_points
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.node_mlp.param_ids().chain(self.super_mlp.param_ids()).collect();
        ids.push(self.super_points);
        ids
    }

    pub fn super_points(&self, params: &ParamSet) -> Vec<PoincarePoint> {
        let m = params.get(self.super_points);
        (0..m.rows).map(|r| [m.get(r, 0), m.get(r, 1)]).collect()
    }

    /// Soft assignment `S x N` on the tape.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound) -> Result<Var> {
        let nodes = tape.constant(self.node_tangent.clone());
        let node_feat = self.node_mlp.forward(tape, bound, nodes)?;
        let supers = tape.log_map_rows(bound.var(self.super_points));
        let super_feat = self.super_mlp.forward(tape, bound, supers)?;
        let node_t = tape.transpose(node_feat);
        let logits = tape.matmul(super_feat, node_t);
        Ok(tape.softmax_cols(logits))
    }

    pub fn compute(&self, params: &ParamSet) -> Result<AssignmentMatrix> {
        let mut tape = Tape::new();
        let bound = params.bind_where(&mut tape, |_| false);
        let p = self.forward(&mut tape, &bound)?;
        Ok(AssignmentMatrix::from_soft(tape.value(p).clone()))
    }

    /// Conformal rescaling of the super-point gradient, in place.
    pub fn scale_gradient(&self, params: &ParamSet, grads: &mut [Option<Matrix>], mode: GradientScale) {
        let Some(g) = grads[self.super_points.index()].as_mut() else {
            return;
        };
        let pts = params.get(self.super_points);
        for r in 0..pts.rows {
            let f = mode.factor([pts.get(r, 0), pts.get(r, 1)]);
            g.row_mut(r).iter_mut().for_each(|x| *x *= f);
        }
    }

    /// Projects super points back into the disk after an update.
    pub fn clip_points(&self, params: &mut ParamSet) {
        let pts = params.get_mut(self.super_points);
        for r in 0..pts.rows {
            let c = hyperbolic::clip([pts.get(r, 0), pts.get(r, 1)]);
            pts.row_mut(r).copy_from_slice(&c);
        }
    }
}

/// Mean column entropy `-(1/N) Σ P ln P`.
pub fn entropy_loss(tape: &mut Tape, p: Var) -> Var {
    let n = tape.shape(p).1 as f64;
    let plogp = tape.xlogx(p);
    let total = tape.sum(plogp);
    tape.scale(total, -1.0 / n)
}

/// `‖A − PᵀP‖_F` for a simple graph, without materializing `N x N`:
/// `‖A‖² − 2·tr(P A Pᵀ) + ‖P Pᵀ‖²`.
pub fn reconstruction_loss(tape: &mut Tape, p: Var, adjacency: &Arc<Csr>) -> Var {
    let a_sq = adjacency.values.iter().map(|v| v * v).sum::<f64>();
    let pt = tape.transpose(p);
    let apt = tape.spmm(Arc::clone(adjacency), pt);
    let pa = tape.transpose(apt);
    let cross = tape.mul(p, pa);
    let cross = tape.sum(cross);
    let ppt = tape.matmul(p, pt);
    let ppt_sq = tape.square(ppt);
    let gram = tape.sum(ppt_sq);
    let a_const = tape.constant(Matrix::scalar(a_sq));
    let partial = tape.add_scaled(a_const, cross, -2.0);
    let total = tape.add(partial, gram);
    tape.sqrt(total)
}

/// Binary adjacency as a sparse operator.
pub fn adjacency_csr(graph: &Graph) -> Csr {
    let n = graph.node_count();
    let mut t = Vec::with_capacity(2 * graph.edge_count());
    for u in 0..n {
        for &v in graph.neighbors(u) {
            t.push((u, v, 1.0));
        }
    }
    Csr::from_triplets(n, n, t)
}

/// Mean absolute deviation from the physics-informed assignment.
pub fn pretrain_loss(tape: &mut Tape, p: Var, p0: &Matrix) -> Var {
    let target = tape.constant(p0.clone());
    let diff = tape.sub(p, target);
    let abs = tape.abs(diff);
    tape.mean(abs)
}

/// Fits the assignment model to `p0` with Adam; returns the loss per
/// iteration (the loss before each update).
pub fn pretrain_assignment(
    model: &AssignmentModel,
    params: &mut ParamSet,
    p0: &AssignmentMatrix,
    iters: usize,
    lr: f64,
    scale: GradientScale,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(lr);
    let ids = model.param_ids();
    let mut losses = Vec::with_capacity(iters);
    for it in 0..iters {
        let mut tape = Tape::new();
        let bound = params.bind_where(&mut tape, |id| ids.contains(&id));
        let p = model.forward(&mut tape, &bound)?;
        let loss = pretrain_loss(&mut tape, p, &p0.soft);
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                step: it,
                context: "assignment pretraining loss".into(),
            });
        }
        losses.push(value);
        if value == 0.0 {
            break;
        }
        let mut grads = tape.backward(loss);
        let mut g = bound.gradients(&mut grads);
        model.scale_gradient(params, &mut g, scale);
        adam.step(params, &g);
        model.clip_points(params);
    }
    Ok(losses)
}

/// Graph-convolution encoder of lookback windows followed by pooling
/// through the assignment matrix.
#[derive(Debug, Clone)]
pub struct Aggregator {
    pub gcn: Gcn,
}

impl Aggregator {
    pub fn new(params: &mut ParamSet, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Aggregator {
            gcn: Gcn::new(params, "aggregate.theta1", input, hidden, Activation::Tanh, rng),
        }
    }

    /// `X_s = P · tanh(Â X Θ1)` for `batch` stacked windows: `x` is
    /// `(batch·N) x (L·d)`, `adjacency` the matching block-diagonal `Â`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        adjacency: &Arc<Csr>,
        p: Var,
        x: Var,
        batch: usize,
    ) -> Result<Var> {
        let h = self.gcn.forward(tape, bound, adjacency, x)?;
        let (s, n) = tape.shape(p);
        if tape.shape(h).0 != batch * n {
            return Err(Error::shape(
                "aggregate_states",
                format!("{} rows for {batch} windows of {n} nodes", tape.shape(h).0),
            ));
        }
        let _ = s;
        Ok(tape.block_left_mul(p, h, batch))
    }
}

/// `P A Pᵀ` for the hard 0/1 assignment: entry `(a, b)` counts edge
/// endpoints between groups, the diagonal twice the internal edges.
pub fn skeleton_adjacency(hard: &[usize], super_count: usize, graph: &Graph) -> Matrix {
    let mut a = Matrix::zeros(super_count, super_count);
    for u in 0..graph.node_count() {
        for &v in graph.neighbors(u) {
            let (su, sv) = (hard[u], hard[v]);
            a.data[su * super_count + sv] += 1.0;
        }
    }
    a
}

/// CSV of `node_id,super_node_id`.
pub fn assignment_csv(hard: &[usize]) -> String {
    let mut out = String::from("node_id,super_node_id\n");
    for (n, s) in hard.iter().enumerate() {
        let _ = writeln!(out, "{n},{s}");
    }
    out
}

/// CSV of weighted super-edges `source,target,weight` with `source <= target`.
pub fn super_edges_csv(skeleton: &Matrix) -> String {
    let mut out = String::from("source,target,weight\n");
    for a in 0..skeleton.rows {
        for b in a..skeleton.cols {
            let w = skeleton.get(a, b);
            if w != 0.0 {
                let _ = writeln!(out, "{a},{b},{w}");
            }
        }
    }
    out
}
