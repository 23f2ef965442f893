//! Poincaré-disk geometry (curvature −1), tangent-space maps at the origin,
//! Riemannian gradient scaling and a deterministic topology embedding.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;

/// Points are kept at Euclidean norm at most this value.
pub const CLIP_RADIUS: f64 = 1.0 - 1e-7;

/// A point of the open unit disk.
pub type PoincarePoint = [f64; 2];

#[inline]
fn dot(x: [f64; 2], y: [f64; 2]) -> f64 {
    x[0] * y[0] + x[1] * y[1]
}

#[inline]
pub fn norm(x: [f64; 2]) -> f64 {
    dot(x, x).sqrt()
}

/// Radially projects `x` back inside the clip radius.
pub fn clip(x: PoincarePoint) -> PoincarePoint {
    let n = norm(x);
    if n > CLIP_RADIUS {
        let s = CLIP_RADIUS / n;
        [x[0] * s, x[1] * s]
    } else {
        x
    }
}

/// Möbius addition `x ⊕ y`.
pub fn mobius_add(x: PoincarePoint, y: PoincarePoint) -> PoincarePoint {
    let xy = dot(x, y);
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let a = 1.0 + 2.0 * xy + y2;
    let b = 1.0 - x2;
    let den = 1.0 + 2.0 * xy + x2 * y2;
    clip([(a * x[0] + b * y[0]) / den, (a * x[1] + b * y[1]) / den])
}

/// Hyperbolic distance.
pub fn distance(x: PoincarePoint, y: PoincarePoint) -> f64 {
    let diff = [x[0] - y[0], x[1] - y[1]];
    let u = 2.0 * dot(diff, diff) / ((1.0 - dot(x, x)) * (1.0 - dot(y, y)));
    // arcosh(1 + u) = ln(1 + u + sqrt(u (u + 2))), stable for small u
    (u + (u * (u + 2.0)).sqrt()).ln_1p()
}

/// Logarithmic map at the origin: `artanh(‖y‖) · y / ‖y‖`.
pub fn log_map_origin(y: PoincarePoint) -> [f64; 2] {
    let n = norm(y);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let s = n.min(CLIP_RADIUS).atanh() / n;
    [y[0] * s, y[1] * s]
}

/// Exponential map at the origin: `tanh(‖v‖) · v / ‖v‖`.
pub fn exp_map_origin(v: [f64; 2]) -> PoincarePoint {
    let n = norm(v);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let s = n.tanh() / n;
    clip([v[0] * s, v[1] * s])
}

/// Conformal gradient rescaling applied to learnable disk coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScale {
    /// `((1 − ‖θ‖) / 2)²`
    #[default]
    LinearNorm,
    /// `((1 − ‖θ‖²) / 2)²`, the textbook Poincaré conformal factor.
    SquaredNorm,
}

impl GradientScale {
    pub fn factor(self, theta: PoincarePoint) -> f64 {
        let n = norm(theta);
        let base = match self {
            GradientScale::LinearNorm => (1.0 - n) / 2.0,
            GradientScale::SquaredNorm => (1.0 - n * n) / 2.0,
        };
        base * base
    }
}

/// Scales a Euclidean gradient at `theta` by `((1 − ‖θ‖) / 2)²`.
pub fn riemannian_scale(theta: PoincarePoint, euclid_grad: [f64; 2]) -> [f64; 2] {
    riemannian_scale_with(GradientScale::LinearNorm, theta, euclid_grad)
}

pub fn riemannian_scale_with(mode: GradientScale, theta: PoincarePoint, g: [f64; 2]) -> [f64; 2] {
    let f = mode.factor(theta);
    [f * g[0], f * g[1]]
}

pub fn from_polar(r: f64, theta: f64) -> PoincarePoint {
    clip([r * theta.cos(), r * theta.sin()])
}

/// Maximum radial coordinate of the topology embedding.
pub const R_MAX: f64 = 0.9;

/// Frozen node coordinates and learnable super-node coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub node_points: Vec<PoincarePoint>,
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    pub super_points: Vec<PoincarePoint>,
}

impl EmbeddingSet {
    pub fn node_count(&self) -> usize {
        self.node_points.len()
    }

    /// CSV with columns `node_id,r,theta,x,y,assigned_super_node`.
    pub fn to_csv(&self, assignment: Option<&[usize]>) -> String {
        let mut out = String::from("node_id,r,theta,x,y,assigned_super_node\n");
        for i in 0..self.node_count() {
            let p = self.node_points[i];
            let s = assignment.map(|a| a[i].to_string()).unwrap_or_default();
            let _ = writeln!(out, "{i},{},{},{},{},{s}", self.radii[i], self.angles[i], p[0], p[1]);
        }
        out
    }
}

fn components(graph: &Graph) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut label = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![s];
        label[s] = id;
        let mut head = 0;
        while head < members.len() {
            let u = members[head];
            head += 1;
            for &v in graph.neighbors(u) {
                if label[v] == usize::MAX {
                    label[v] = id;
                    members.push(v);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

/// Second eigenvector of the normalized Laplacian restricted to one
/// connected component, by power iteration on `(I + D^-1/2 A D^-1/2) / 2`
/// with the trivial eigenvector deflated.
fn fiedler_vector(graph: &Graph, members: &[usize]) -> Vec<f64> {
    let m = members.len();
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let adj: Vec<Vec<usize>> = members
        .iter()
        .map(|&u| graph.neighbors(u).iter().map(|w| local[w]).collect())
        .collect();
    let inv_sqrt_deg: Vec<f64> = adj.iter().map(|a| 1.0 / (a.len() as f64).sqrt()).collect();
    let mut trivial: Vec<f64> = adj.iter().map(|a| (a.len() as f64).sqrt()).collect();
    let tn = trivial.iter().map(|x| x * x).sum::<f64>().sqrt();
    trivial.iter_mut().for_each(|x| *x /= tn);

    let project = |v: &mut [f64]| {
        let c: f64 = v.iter().zip(&trivial).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&trivial).for_each(|(a, b)| *a -= c * b);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
    };
    // deterministic low-discrepancy start
    let mut v: Vec<f64> = (0..m).map(|i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5).collect();
    project(&mut v);
    let mut next = vec![0.0; m];
    for _ in 0..20_000 {
        for i in 0..m {
            let acc: f64 = adj[i].iter().map(|&j| inv_sqrt_deg[j] * v[j]).sum();
            next[i] = 0.5 * (v[i] + inv_sqrt_deg[i] * acc);
        }
        project(&mut next);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if delta < 1e-12 {
            break;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

/// Angular ordering of nodes: components by decreasing size, nodes within a
/// component by their normalized-Laplacian spectral coordinate.
pub fn spectral_order(graph: &Graph) -> Vec<usize> {
    let mut order = Vec::with_capacity(graph.node_count());
    for members in components(graph) {
        if members.len() < 3 {
            order.extend(members);
            continue;
        }
        let coord = fiedler_vector(graph, &members);
        let mut idx: Vec<usize> = (0..members.len()).collect();
        idx.sort_by(|&a, &b| coord[a].total_cmp(&coord[b]).then(members[a].cmp(&members[b])));
        order.extend(idx.into_iter().map(|i| members[i]));
    }
    order
}

/// Polar topology embedding: radius decreasing in degree, angle from the
/// spectral ordering. Super-node points are left empty.
pub fn embed_topology(graph: &Graph) -> EmbeddingSet {
    let n = graph.node_count();
    let degrees = graph.degrees();
    let k_max = degrees.iter().copied().max().unwrap_or(0);
    let denom = ((k_max + 1) as f64).ln();
    let radii: Vec<f64> = degrees
        .iter()
        .map(|&k| {
            if k_max == 0 {
                R_MAX
            } else {
                R_MAX * (1.0 - ((k + 1) as f64).ln() / denom)
            }
        })
        .collect();
    let mut angles = vec![0.0; n];
    for (rank, node) in spectral_order(graph).into_iter().enumerate() {
        angles[node] = 2.0 * PI * rank as f64 / n as f64;
    }
    let node_points = (0..n).map(|i| from_polar(radii[i], angles[i])).collect();
    EmbeddingSet {
        node_points,
        radii,
        angles,
        super_points: Vec::new(),
    }
}
