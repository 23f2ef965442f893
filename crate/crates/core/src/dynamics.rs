//! Ground-truth network dynamics (Hindmarsh–Rose, FitzHugh–Nagumo, coupled
//! Rössler), explicit Euler simulation and windowed dataset construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicsKind {
    #[serde(rename = "hr", alias = "hindmarsh_rose")]
    HindmarshRose,
    #[serde(rename = "fhn", alias = "fitzhugh_nagumo")]
    FitzHughNagumo,
    #[serde(rename = "cr", alias = "coupled_rossler")]
    CoupledRossler,
}

impl DynamicsKind {
    pub fn state_dim(self) -> usize {
        match self {
            DynamicsKind::HindmarshRose | DynamicsKind::CoupledRossler => 3,
            DynamicsKind::FitzHughNagumo => 2,
        }
    }

    /// Simulated duration in seconds used by the standard protocol.
    pub fn default_duration(self) -> f64 {
        match self {
            DynamicsKind::HindmarshRose => 20.0,
            DynamicsKind::FitzHughNagumo | DynamicsKind::CoupledRossler => 50.0,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            DynamicsKind::HindmarshRose => "hr",
            DynamicsKind::FitzHughNagumo => "fhn",
            DynamicsKind::CoupledRossler => "cr",
        }
    }
}

impl std::str::FromStr for DynamicsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hr" | "hindmarsh_rose" => Ok(DynamicsKind::HindmarshRose),
            "fhn" | "fitzhugh_nagumo" => Ok(DynamicsKind::FitzHughNagumo),
            "cr" | "coupled_rossler" => Ok(DynamicsKind::CoupledRossler),
            other => Err(Error::invalid(format!("unknown dynamics {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HindmarshRoseParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub u: f64,
    pub s: f64,
    pub r: f64,
    pub x0: f64,
    pub epsilon: f64,
    pub v_syn: f64,
    pub lambda: f64,
    pub omega_syn: f64,
    pub i_ext: f64,
}

impl Default for HindmarshRoseParams {
    fn default() -> Self {
        HindmarshRoseParams {
            a: 1.0,
            b: 3.0,
            c: 1.0,
            u: 5.0,
            s: 4.0,
            r: 0.005,
            x0: -1.6,
            epsilon: 0.15,
            v_syn: 2.0,
            lambda: 10.0,
            omega_syn: 1.0,
            i_ext: 3.24,
        }
    }
}

impl HindmarshRoseParams {
    /// Sigmoidal synaptic activation of a presynaptic membrane potential.
    pub fn mu(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-self.lambda * (x - self.omega_syn)).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitzHughNagumoParams {
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for FitzHughNagumoParams {
    fn default() -> Self {
        FitzHughNagumoParams {
            epsilon: 1.0,
            a: 0.28,
            b: 0.5,
            c: -0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosslerParams {
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub freq_mean: f64,
    pub freq_std: f64,
}

impl Default for RosslerParams {
    fn default() -> Self {
        RosslerParams {
            epsilon: 0.15,
            a: 0.2,
            b: 0.2,
            c: -6.0,
            freq_mean: 1.0,
            freq_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DynamicsParams {
    #[serde(rename = "hr")]
    HindmarshRose(HindmarshRoseParams),
    #[serde(rename = "fhn")]
    FitzHughNagumo(FitzHughNagumoParams),
    #[serde(rename = "cr")]
    CoupledRossler {
        params: RosslerParams,
        freq_seed: u64,
        /// Natural frequency of every node, stored for bit-exact re-simulation.
        frequencies: Vec<f64>,
    },
}

/// A dynamical system bound to a node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSpec {
    pub node_count: usize,
    pub params: DynamicsParams,
}

impl DynamicsSpec {
    /// Paper-default parameters for `kind`. Rössler frequencies are drawn
    /// from `Normal(1, 0.1)` with `seed`.
    pub fn new(kind: DynamicsKind, node_count: usize, seed: u64) -> Self {
        let params = match kind {
            DynamicsKind::HindmarshRose => DynamicsParams::HindmarshRose(HindmarshRoseParams::default()),
            DynamicsKind::FitzHughNagumo => DynamicsParams::FitzHughNagumo(FitzHughNagumoParams::default()),
            DynamicsKind::CoupledRossler => {
                Self::rossler(RosslerParams::default(), node_count, seed)
            }
        };
        DynamicsSpec { node_count, params }
    }

    fn rossler(params: RosslerParams, node_count: usize, seed: u64) -> DynamicsParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(params.freq_mean, params.freq_std).expect("valid normal");
        let frequencies = (0..node_count).map(|_| normal.sample(&mut rng)).collect();
        DynamicsParams::CoupledRossler {
            params,
            freq_seed: seed,
            frequencies,
        }
    }

    pub fn with_rossler(params: RosslerParams, node_count: usize, seed: u64) -> Self {
        DynamicsSpec {
            node_count,
            params: Self::rossler(params, node_count, seed),
        }
    }

    pub fn kind(&self) -> DynamicsKind {
        match self.params {
            DynamicsParams::HindmarshRose(_) => DynamicsKind::HindmarshRose,
            DynamicsParams::FitzHughNagumo(_) => DynamicsKind::FitzHughNagumo,
            DynamicsParams::CoupledRossler { .. } => DynamicsKind::CoupledRossler,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.kind().state_dim()
    }

    /// Seeded uniform initial condition inside each attractor's basin.
    pub fn initial_state(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranges: &[(f64, f64)] = match self.kind() {
            DynamicsKind::HindmarshRose => &[(-1.5, 1.5), (-10.0, 0.0), (2.0, 4.0)],
            DynamicsKind::FitzHughNagumo => &[(-1.0, 1.0), (-1.0, 1.0)],
            DynamicsKind::CoupledRossler => &[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
        };
        let mut out = Vec::with_capacity(self.node_count * ranges.len());
        for _ in 0..self.node_count {
            for &(lo, hi) in ranges {
                out.push(rng.random_range(lo..hi));
            }
        }
        out
    }
}

/// Right-hand side of the network ODE for a row-major `N x d` state.
pub fn derivative(spec: &DynamicsSpec, graph: &Graph, state: &[f64]) -> Result<Vec<f64>> {
    let n = graph.node_count();
    let d = spec.state_dim();
    if spec.node_count != n || state.len() != n * d {
        return Err(Error::shape(
            "derivative",
            format!("state of len {} for {} nodes x {} dims", state.len(), n, d),
        ));
    }
    if let Some(pos) = state.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            step: 0,
            context: format!("state entry {pos} in derivative"),
        });
    }
    let mut out = vec![0.0; n * d];
    derivative_into(spec, graph, state, &mut out);
    Ok(out)
}

fn derivative_into(spec: &DynamicsSpec, graph: &Graph, state: &[f64], out: &mut [f64]) {
    let n = graph.node_count();
    match &spec.params {
        DynamicsParams::HindmarshRose(p) => {
            let mu: Vec<f64> = (0..n).map(|j| p.mu(state[3 * j])).collect();
            for i in 0..n {
                let (x1, x2, x3) = (state[3 * i], state[3 * i + 1], state[3 * i + 2]);
                let drive: f64 = graph.neighbors(i).iter().map(|&j| mu[j]).sum();
                out[3 * i] = x2 - p.a * x1 * x1 * x1 + p.b * x1 * x1 - x3
                    + p.i_ext
                    + p.epsilon * (p.v_syn - x1) * drive;
                out[3 * i + 1] = p.c - p.u * x1 * x1 - x2;
                out[3 * i + 2] = p.r * (p.s * (x1 - p.x0) - x3);
            }
        }
        DynamicsParams::FitzHughNagumo(p) => {
            for i in 0..n {
                let (x1, x2) = (state[2 * i], state[2 * i + 1]);
                let nbrs = graph.neighbors(i);
                let coupling = if nbrs.is_empty() {
                    0.0
                } else {
                    let k_in = nbrs.len() as f64;
                    nbrs.iter().map(|&j| (state[2 * j] - x1) / k_in).sum()
                };
                out[2 * i] = x1 - x1 * x1 * x1 - x2 - p.epsilon * coupling;
                out[2 * i + 1] = p.a + p.b * x1 + p.c * x2;
            }
        }
        DynamicsParams::CoupledRossler { params: p, frequencies, .. } => {
            for i in 0..n {
                let (x1, x2, x3) = (state[3 * i], state[3 * i + 1], state[3 * i + 2]);
                let w = frequencies[i];
                let diffusion: f64 = graph.neighbors(i).iter().map(|&j| state[3 * j] - x1).sum();
                out[3 * i] = -w * x2 - x3 + p.epsilon * diffusion;
                out[3 * i + 1] = w * x1 + p.a * x2;
                out[3 * i + 2] = p.b + x3 * (x1 + p.c);
            }
        }
    }
}

/// Node-major trajectory: `data[(node * T + t) * d + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub node_count: usize,
    pub len: usize,
    pub dim: usize,
    /// Seconds between consecutive frames.
    pub dt: f64,
    pub data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(node_count: usize, len: usize, dim: usize, dt: f64) -> Self {
        Trajectory {
            node_count,
            len,
            dim,
            dt,
            data: vec![0.0; node_count * len * dim],
        }
    }

    #[inline]
    pub fn index(&self, node: usize, t: usize, k: usize) -> usize {
        (node * self.len + t) * self.dim + k
    }

    pub fn get(&self, node: usize, t: usize, k: usize) -> f64 {
        self.data[self.index(node, t, k)]
    }

    /// Row-major `N x d` snapshot at frame `t`.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.node_count * self.dim);
        for node in 0..self.node_count {
            let base = self.index(node, t, 0);
            out.extend_from_slice(&self.data[base..base + self.dim]);
        }
        out
    }

    fn set_frame(&mut self, t: usize, frame: &[f64]) {
        for node in 0..self.node_count {
            let base = self.index(node, t, 0);
            self.data[base..base + self.dim].copy_from_slice(&frame[node * self.dim..(node + 1) * self.dim]);
        }
    }
}

/// Integration step of the ground-truth simulations, in seconds.
pub const SIM_DT: f64 = 0.01;
/// Observations kept after downsampling.
pub const OBSERVATIONS: usize = 500;

/// Standard run: seeded initial state, [`SIM_DT`] steps over the system's
/// default duration.
pub fn simulate_default(spec: &DynamicsSpec, graph: &Graph, seed: u64) -> Result<Trajectory> {
    let steps = (spec.kind().default_duration() / SIM_DT).round() as usize;
    simulate(spec, graph, &spec.initial_state(seed), SIM_DT, steps)
}

/// Explicit Euler integration; the returned trajectory includes `x0` and has
/// `steps + 1` frames spaced `dt` apart.
pub fn simulate(spec: &DynamicsSpec, graph: &Graph, x0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must be rejected too
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive (got {dt})")));
    }
    let n = graph.node_count();
    let d = spec.state_dim();
    if spec.node_count != n || x0.len() != n * d {
        return Err(Error::shape("simulate", format!("x0 len {} for {} x {}", x0.len(), n, d)));
    }
    let mut traj = Trajectory::zeros(n, steps + 1, d, dt);
    let mut state = x0.to_vec();
    let mut rate = vec![0.0; n * d];
    traj.set_frame(0, &state);
    for step in 1..=steps {
        derivative_into(spec, graph, &state, &mut rate);
        for (x, r) in state.iter_mut().zip(&rate) {
            *x += dt * r;
        }
        if let Some(pos) = state.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                context: format!("node {} diverged during simulation", pos / d),
            });
        }
        traj.set_frame(step, &state);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Downsampled observations with chronological 6:2:2 splits, train-split
/// normalization statistics and lookback/horizon windowing.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    /// Raw (physical units) observations.
    pub observed: Trajectory,
    normalized: Vec<f64>,
    pub lookback: usize,
    pub horizon: usize,
    /// First frame index of the validation split.
    pub train_end: usize,
    /// First frame index of the test split.
    pub val_end: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

/// Equal-interval stride that yields `target` frames from `raw_len`.
pub fn downsample_stride(raw_len: usize, target: usize) -> usize {
    (raw_len / target).max(1)
}

pub fn downsample(raw: &Trajectory, target: usize) -> Result<Trajectory> {
    if raw.len < target || target == 0 {
        return Err(Error::invalid(format!(
            "raw trajectory of {} frames cannot yield {} observations",
            raw.len, target
        )));
    }
    let stride = downsample_stride(raw.len, target);
    let mut out = Trajectory::zeros(raw.node_count, target, raw.dim, raw.dt * stride as f64);
    for node in 0..raw.node_count {
        for t in 0..target {
            for k in 0..raw.dim {
                let idx = out.index(node, t, k);
                out.data[idx] = raw.get(node, t * stride, k);
            }
        }
    }
    Ok(out)
}

impl TrajectoryDataset {
    /// Builds the dataset from already-downsampled observations.
    pub fn from_observed(observed: Trajectory, lookback: usize, horizon: usize) -> Result<Self> {
        let t_obs = observed.len;
        let train_end = (t_obs as f64 * 0.6).round() as usize;
        let val_end = (t_obs as f64 * 0.8).round() as usize;
        Self::with_splits(observed, lookback, horizon, train_end, val_end)
    }

    pub fn with_splits(
        observed: Trajectory,
        lookback: usize,
        horizon: usize,
        train_end: usize,
        val_end: usize,
    ) -> Result<Self> {
        let t_obs = observed.len;
        if lookback == 0 || horizon == 0 {
            return Err(Error::invalid("lookback and horizon must be positive"));
        }
        if !(train_end <= val_end && val_end <= t_obs) {
            return Err(Error::invalid("split boundaries out of order"));
        }
        let span = lookback + horizon;
        if train_end < span {
            return Err(Error::invalid(format!(
                "train split of {train_end} frames is shorter than lookback+horizon = {span}"
            )));
        }
        if t_obs - train_end < span {
            return Err(Error::invalid(format!(
                "held-out region of {} frames is shorter than lookback+horizon = {span}",
                t_obs - train_end
            )));
        }
        let d = observed.dim;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let count = (observed.node_count * train_end) as f64;
        for node in 0..observed.node_count {
            for t in 0..train_end {
                for (k, m) in mean.iter_mut().enumerate() {
                    *m += observed.get(node, t, k);
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        // second pass: corrected mean and variance
        let mut shift = vec![0.0; d];
        for node in 0..observed.node_count {
            for t in 0..train_end {
                for k in 0..d {
                    let dev = observed.get(node, t, k) - mean[k];
                    shift[k] += dev;
                    sq[k] += dev * dev;
                }
            }
        }
        for k in 0..d {
            let s = shift[k] / count;
            mean[k] += s;
            sq[k] -= count * s * s;
        }
        let std: Vec<f64> = sq.iter().map(|s| (s.max(0.0) / count).sqrt().max(STD_FLOOR)).collect();
        let normalized = observed
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - mean[i % d]) / std[i % d])
            .collect();
        Ok(TrajectoryDataset {
            observed,
            normalized,
            lookback,
            horizon,
            train_end,
            val_end,
            mean,
            std,
        })
    }

    pub fn node_count(&self) -> usize {
        self.observed.node_count
    }

    pub fn dim(&self) -> usize {
        self.observed.dim
    }

    pub fn len(&self) -> usize {
        self.observed.len
    }

    pub fn is_empty(&self) -> bool {
        self.observed.len == 0
    }

    pub fn span(&self) -> usize {
        self.lookback + self.horizon
    }

    /// Window start frames for a split.
    ///
    /// Training windows lie inside the train frames. Evaluation windows lie
    /// entirely after the train frames and are filed under the split that
    /// contains their final frame; with a horizon longer than the validation
    /// block this leaves validation empty.
    pub fn windows(&self, split: Split) -> Vec<usize> {
        let span = self.span();
        match split {
            Split::Train => (0..=self.train_end - span).collect(),
            Split::Val | Split::Test => (self.train_end..=self.len() - span)
                .filter(|&s| {
                    let last = s + span - 1;
                    match split {
                        Split::Val => last < self.val_end,
                        _ => last >= self.val_end,
                    }
                })
                .collect(),
        }
    }

    /// Normalized value at `(node, t, k)`.
    #[inline]
    pub fn norm(&self, node: usize, t: usize, k: usize) -> f64 {
        self.normalized[self.observed.index(node, t, k)]
    }

    /// Normalized `N x (len * d)` block of frames `[first, first + len)`,
    /// flattened time-major per node.
    pub fn block(&self, first: usize, len: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.node_count() * len * d);
        for node in 0..self.node_count() {
            let base = self.observed.index(node, first, 0);
            out.extend_from_slice(&self.normalized[base..base + len * d]);
        }
        out
    }

    /// Lookback input of the window starting at `start`: `N x (L * d)`.
    pub fn input_window(&self, start: usize) -> Vec<f64> {
        self.block(start, self.lookback)
    }

    /// Horizon target of the window starting at `start`: `N x (H * d)`.
    pub fn target_window(&self, start: usize) -> Vec<f64> {
        self.block(start + self.lookback, self.horizon)
    }

    pub fn normalize_value(&self, k: usize, x: f64) -> f64 {
        (x - self.mean[k]) / self.std[k]
    }

    pub fn denormalize_value(&self, k: usize, z: f64) -> f64 {
        z * self.std[k] + self.mean[k]
    }
}

/// Downsamples a raw simulation to `target_obs` frames and builds the
/// split/normalized dataset.
pub fn build_dataset(
    raw: &Trajectory,
    target_obs: usize,
    lookback: usize,
    horizon: usize,
) -> Result<TrajectoryDataset> {
    let observed = downsample(raw, target_obs)?;
    TrajectoryDataset::from_observed(observed, lookback, horizon)
}
