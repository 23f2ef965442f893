use std::collections::VecDeque;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use disknet::diffprog::{Matrix, ParamSet, Tape};
use disknet::graph::{betweenness, generate_ba, Graph};
use disknet::hyperbolic::{distance, embed_topology, exp_map_origin, log_map_origin, mobius_add, norm};
use disknet::skeleton::{
    occupancy_ratio, physics_init, skeleton_adjacency, super_count, AssignmentMatrix, AssignmentModel,
};

fn point() -> impl Strategy<Value = [f64; 2]> {
    (0.0f64..0.95, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| [r * t.cos(), r * t.sin()])
}

fn random_graph(n: usize, edges: &[(usize, usize)]) -> Graph {
    let pairs = edges.iter().map(|&(u, v)| (u % n, v % n)).filter(|(u, v)| u != v);
    Graph::from_edges(n, pairs).unwrap()
}

fn bfs(graph: &Graph, s: usize) -> (Vec<usize>, Vec<f64>) {
    let n = graph.node_count();
    let mut dist = vec![usize::MAX; n];
    let mut count = vec![0.0; n];
    dist[s] = 0;
    count[s] = 1.0;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
            if dist[v] == dist[u] + 1 {
                count[v] += count[u];
            }
        }
    }
    (dist, count)
}

/// Pairwise path-count formula, one unordered pair at a time.
fn betweenness_by_pairs(graph: &Graph) -> Vec<f64> {
    let n = graph.node_count();
    let tables: Vec<_> = (0..n).map(|s| bfs(graph, s)).collect();
    let mut c = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let (ds, cs) = &tables[s];
            if ds[t] == usize::MAX {
                continue;
            }
            let (dt, ct) = &tables[t];
            for v in (0..n).filter(|&v| v != s && v != t) {
                if ds[v] != usize::MAX && dt[v] != usize::MAX && ds[v] + dt[v] == ds[t] {
                    c[v] += cs[v] * ct[v] / cs[t];
                }
            }
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn betweenness_matches_pair_enumeration(edges in prop::collection::vec((0usize..8, 0usize..8), 4..20)) {
        let g = random_graph(8, &edges);
        let fast = betweenness(&g);
        let slow = betweenness_by_pairs(&g);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn mobius_identity_inverse_and_closure(x in point(), y in point()) {
        let z = mobius_add([0.0, 0.0], x);
        prop_assert!((z[0] - x[0]).abs() < 1e-12 && (z[1] - x[1]).abs() < 1e-12);
        let w = mobius_add([-x[0], -x[1]], x);
        prop_assert!(norm(w) < 1e-12);
        prop_assert!(norm(mobius_add(x, y)) < 1.0);
    }

    #[test]
    fn distance_is_a_metric(x in point(), y in point(), z in point()) {
        let (dxy, dyx) = (distance(x, y), distance(y, x));
        prop_assert!((dxy - dyx).abs() <= 1e-9 * dxy.max(1.0));
        prop_assert!(distance(x, x).abs() < 1e-6);
        prop_assert!(dxy <= distance(x, z) + distance(z, y) + 1e-9);
    }

    #[test]
    fn log_exp_round_trip(y in point()) {
        let back = exp_map_origin(log_map_origin(y));
        prop_assert!((back[0] - y[0]).abs() < 1e-9 && (back[1] - y[1]).abs() < 1e-9);
    }

    #[test]
    fn skeleton_adjacency_conserves_mass(
        edges in prop::collection::vec((0usize..10, 0usize..10), 1..30),
        labels in prop::collection::vec(0usize..4, 10),
    ) {
        let g = random_graph(10, &edges);
        let a = skeleton_adjacency(&labels, 4, &g);
        prop_assert_eq!(a.sum(), 2.0 * g.edge_count() as f64);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    #[test]
    fn argmax_ignores_positive_column_scaling(
        values in prop::collection::vec(0.0f64..1.0, 12),
        scales in prop::collection::vec(0.1f64..10.0, 3),
    ) {
        let m = Matrix::from_vec(4, 3, values).unwrap();
        let mut scaled = m.clone();
        for r in 0..4 {
            for c in 0..3 {
                scaled.set(r, c, m.get(r, c) * scales[c]);
            }
        }
        prop_assert_eq!(AssignmentMatrix::from_soft(m).hard, AssignmentMatrix::from_soft(scaled).hard);
    }

    #[test]
    fn physics_init_chunks_partition_the_angle_order(seed in 0u64..50, gamma in 0.05f64..1.0) {
        let g = generate_ba(40, 2, seed).unwrap();
        let e = embed_topology(&g);
        let init = physics_init(&e, gamma).unwrap();
        let s = super_count(40, gamma).unwrap();
        prop_assert_eq!(init.super_points.len(), s);
        prop_assert_eq!(occupancy_ratio(&init.p0.hard, s), 1.0);
        // groups are non-decreasing along the angular order
        let mut order: Vec<usize> = (0..40).collect();
        order.sort_by(|&a, &b| e.angles[a].total_cmp(&e.angles[b]).then(a.cmp(&b)));
        let groups: Vec<usize> = order.iter().map(|&n| init.p0.hard[n]).collect();
        prop_assert!(groups.windows(2).all(|w| w[0] <= w[1]), "{groups:?}");
    }

    #[test]
    fn soft_assignment_columns_sum_to_one(seed in 0u64..20, gamma in 0.1f64..1.0) {
        let g = generate_ba(16, 2, seed).unwrap();
        let e = embed_topology(&g);
        let init = physics_init(&e, gamma).unwrap();
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = AssignmentModel::new(&mut params, &e, &init.super_points, gamma, 8, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let p = model.forward(&mut tape, &bound).unwrap();
        let p = tape.value(p);
        for c in 0..p.cols {
            let total: f64 = (0..p.rows).map(|r| p.get(r, c)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn argmax_ties_go_to_lowest_index() {
    let m = Matrix::from_vec(3, 2, vec![0.2, 0.5, 0.4, 0.5, 0.4, 0.0]).unwrap();
    assert_eq!(AssignmentMatrix::from_soft(m).hard, vec![1, 0]);
}
