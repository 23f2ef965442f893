//! WebAssembly bindings for the browser demo in `www/`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use disknet::dynamics::{downsample, simulate_default, DynamicsKind, DynamicsSpec};
use disknet::graph::{generate_ba, generate_ws, Graph};
use disknet::hyperbolic::{distance, embed_topology, PoincarePoint};
use disknet::skeleton::{physics_init, skeleton_adjacency};

#[derive(Serialize)]
pub struct SkeletonView {
    pub nodes: Vec<PoincarePoint>,
    pub degrees: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub supers: Vec<PoincarePoint>,
    pub assignment: Vec<usize>,
    /// Weighted edges between distinct super-nodes.
    pub super_edges: Vec<(usize, usize, f64)>,
    pub occupancy: f64,
}

#[derive(Serialize)]
pub struct TraceView {
    pub dt: f64,
    /// First state component of each requested node over time.
    pub series: Vec<Vec<f64>>,
    pub nodes: Vec<usize>,
}

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn graph(kind: &str, n: usize, param: usize, seed: u64) -> Result<Graph, JsError> {
    match kind {
        "ba" => generate_ba(n, param, seed).map_err(err),
        "ws" => generate_ws(n, param, 0.1, seed).map_err(err),
        other => Err(JsError::new(&format!("unknown graph kind {other}"))),
    }
}

/// Embeds a synthetic graph in the Poincaré disk and groups it into
/// `ceil(gamma n)` super-nodes by angle. Returns JSON.
#[wasm_bindgen]
pub fn skeleton(kind: &str, n: usize, param: usize, gamma: f64, seed: u64) -> Result<String, JsError> {
    let g = graph(kind, n, param, seed)?;
    let embedding = embed_topology(&g);
    let init = physics_init(&embedding, gamma).map_err(err)?;
    let s = init.super_points.len();
    let a = skeleton_adjacency(&init.p0.hard, s, &g);
    let mut super_edges = Vec::new();
    for i in 0..s {
        for j in i + 1..s {
            if a.get(i, j) > 0.0 {
                super_edges.push((i, j, a.get(i, j)));
            }
        }
    }
    let view = SkeletonView {
        nodes: embedding.node_points,
        degrees: g.degrees(),
        edges: g.edges().collect(),
        supers: init.super_points,
        occupancy: init.p0.occupancy(),
        assignment: init.p0.hard,
        super_edges,
    };
    serde_json::to_string(&view).map_err(err)
}

/// Simulates `dynamics` (hr, fhn or cr) on a synthetic graph and returns
/// `observations` frames of the first component for up to `shown` nodes,
/// highest degree first.
#[wasm_bindgen]
pub fn simulate(
    kind: &str,
    n: usize,
    param: usize,
    dynamics: &str,
    seed: u64,
    observations: usize,
    shown: usize,
) -> Result<String, JsError> {
    let g = graph(kind, n, param, seed)?;
    let dynamics: DynamicsKind = dynamics.parse().map_err(err)?;
    let spec = DynamicsSpec::new(dynamics, g.node_count(), seed);
    let raw = simulate_default(&spec, &g, seed).map_err(err)?;
    let obs = downsample(&raw, observations).map_err(err)?;
    let degrees = g.degrees();
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
    order.truncate(shown);
    let series = order.iter().map(|&node| (0..obs.len).map(|t| obs.get(node, t, 0)).collect()).collect();
    serde_json::to_string(&TraceView {
        dt: obs.dt,
        series,
        nodes: order,
    })
    .map_err(err)
}

/// Hyperbolic distance between two points of the open unit disk.
#[wasm_bindgen]
pub fn disk_distance(x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    distance([x1, y1], [x2, y2])
}
