//! Lifting super-node latent trajectories back to node predictions:
//! degree clustering, latent expansion and per-cluster refiners.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffprog::{Activation, Bound, Mlp, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeClustering {
    pub labels: Vec<usize>,
    /// Centers in `ln(degree + 1)` space, ascending.
    pub centers: Vec<f64>,
    /// Requested cluster count when it had to be lowered.
    pub requested: Option<usize>,
}

impl DegreeClustering {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&n| self.labels[n] == cluster).collect()
    }

    /// CSV of `node_id,degree,cluster_id`.
    pub fn to_csv(&self, graph: &Graph) -> String {
        let mut out = String::from("node_id,degree,cluster_id\n");
        for (n, c) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "{n},{},{c}", graph.degree(n));
        }
        out
    }
}

/// One-dimensional k-means on `ln(degree + 1)` with k-means++ seeding.
/// `k` is lowered to the number of distinct degrees when larger.
pub fn cluster_by_degree(graph: &Graph, k: usize, seed: u64) -> Result<DegreeClustering> {
    let features: Vec<f64> = graph.degrees().iter().map(|&d| ((d + 1) as f64).ln()).collect();
    kmeans_1d(&features, k, seed)
}

pub fn kmeans_1d(features: &[f64], k: usize, seed: u64) -> Result<DegreeClustering> {
    if k == 0 {
        return Err(Error::invalid("cluster count must be at least 1"));
    }
    if features.is_empty() {
        return Err(Error::invalid("nothing to cluster"));
    }
    let mut distinct = features.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let requested = (k > distinct.len()).then_some(k);
    let k = k.min(distinct.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![features[rng.random_range(0..features.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = features
            .iter()
            .map(|&x| centers.iter().map(|c| (x - c) * (x - c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let mut pick = rng.random_range(0.0..total);
        let mut chosen = d2.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if pick < w {
                chosen = i;
                break;
            }
            pick -= w;
        }
        centers.push(features[chosen]);
    }

    let nearest = |x: f64, centers: &[f64]| -> usize {
        let mut best = 0;
        for c in 1..centers.len() {
            if (x - centers[c]).abs() < (x - centers[best]).abs() {
                best = c;
            }
        }
        best
    };
    let mut labels = vec![usize::MAX; features.len()];
    for _ in 0..1000 {
        let next: Vec<usize> = features.iter().map(|&x| nearest(x, &centers)).collect();
        let mut sums = vec![(0.0, 0usize); k];
        for (&x, &l) in features.iter().zip(&next) {
            sums[l].0 += x;
            sums[l].1 += 1;
        }
        let mut reseeded = false;
        for c in 0..k {
            if sums[c].1 == 0 {
                // farthest point from its own center
                let far = (0..features.len())
                    .max_by(|&a, &b| {
                        let da = (features[a] - centers[next[a]]).abs();
                        let db = (features[b] - centers[next[b]]).abs();
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty features");
                centers[c] = features[far];
                reseeded = true;
            } else {
                centers[c] = sums[c].0 / sums[c].1 as f64;
            }
        }
        if !reseeded && next == labels {
            break;
        }
        labels = next;
    }

    // canonical labels: ascending centers
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    Ok(DegreeClustering {
        labels: labels.iter().map(|&l| rank[l]).collect(),
        centers: order.iter().map(|&c| centers[c]).collect(),
        requested,
    })
}

/// Row indices that copy each super-node's latent row to its member nodes,
/// for `batch` stacked windows: row `b·N + n` reads `b·S + hard[n]`.
pub fn expand_indices(hard: &[usize], super_count: usize, batch: usize) -> Vec<usize> {
    (0..batch)
        .flat_map(|b| hard.iter().map(move |&s| b * super_count + s))
        .collect()
}

/// Copies super-node rows to their nodes.
pub fn expand(tape: &mut Tape, latent: Var, hard: &[usize], super_count: usize, batch: usize) -> Var {
    tape.gather_rows(latent, Arc::new(expand_indices(hard, super_count, batch)))
}

/// `Θ4 [h0(history) ‖ h1(latent)]` for one cluster.
#[derive(Debug, Clone)]
pub struct Refiner {
    pub history: Mlp,
    pub latent: Mlp,
    pub combine: Mlp,
}

impl Refiner {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        history_dim: usize,
        latent_dim: usize,
        hidden: usize,
        output_dim: usize,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        Refiner {
            history: Mlp::new(params, &format!("{name}.h0"), &[history_dim, hidden, hidden], Activation::Tanh, rng),
            latent: Mlp::new(params, &format!("{name}.h1"), &[latent_dim, hidden, hidden], Activation::Tanh, rng),
            combine: Mlp::new(params, &format!("{name}.theta4"), &[2 * hidden, output_dim], output, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, history: Var, latent: Var) -> Result<Var> {
        let h0 = self.history.forward(tape, bound, history)?;
        let h1 = self.latent.forward(tape, bound, latent)?;
        let both = tape.concat_cols(&[h0, h1]);
        self.combine.forward(tape, bound, both)
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.history
            .param_ids()
            .chain(self.latent.param_ids())
            .chain(self.combine.param_ids())
    }
}

/// One refiner per degree cluster.
#[derive(Debug, Clone)]
pub struct RefinerBank {
    pub refiners: Vec<Refiner>,
    pub clustering: DegreeClustering,
}

impl RefinerBank {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        clustering: DegreeClustering,
        history_dim: usize,
        latent_dim: usize,
        hidden: usize,
        output_dim: usize,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let refiners = (0..clustering.k())
            .map(|c| {
                Refiner::new(
                    params,
                    &format!("refine.{c}"),
                    history_dim,
                    latent_dim,
                    hidden,
                    output_dim,
                    output,
                    rng,
                )
            })
            .collect();
        RefinerBank { refiners, clustering }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.refiners.iter().flat_map(Refiner::param_ids).collect()
    }

    /// Refines `batch` stacked windows: `history` is `(batch·N) x (L·d)`,
    /// `latent` the expanded `(batch·N) x (H·h_z)`. Rows keep their order.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, history: Var, latent: Var, batch: usize) -> Result<Var> {
        let n = self.clustering.labels.len();
        let rows = tape.shape(history).0;
        if rows != batch * n || tape.shape(latent).0 != rows {
            return Err(Error::shape(
                "refine",
                format!(
                    "history {} rows, latent {} rows, expected {}",
                    rows,
                    tape.shape(latent).0,
                    batch * n
                ),
            ));
        }
        let mut parts = Vec::with_capacity(self.refiners.len());
        let mut position = vec![0; rows];
        let mut offset = 0;
        for (c, refiner) in self.refiners.iter().enumerate() {
            let members = self.clustering.members(c);
            if members.is_empty() {
                continue;
            }
            let idx: Vec<usize> = (0..batch).flat_map(|b| members.iter().map(move |&m| b * n + m)).collect();
            for (i, &r) in idx.iter().enumerate() {
                position[r] = offset + i;
            }
            offset += idx.len();
            let idx = Arc::new(idx);
            let h = tape.gather_rows(history, Arc::clone(&idx));
            let z = tape.gather_rows(latent, idx);
            parts.push(refiner.forward(tape, bound, h, z)?);
        }
        let stacked = tape.concat_rows(&parts);
        Ok(tape.gather_rows(stacked, Arc::new(position)))
    }
}
