//! Finite-difference checks shared by the gradient and acceptance suites.

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use disknet::diffprog::{
    finite_diff_check, gcn_normalized_adjacency, row_normalized_with_self_loops, Activation, Bound, Csr, Gcn, Matrix,
    Mlp, ParamSet, Tape, Var,
};
use disknet::dynamics::{DynamicsKind, DynamicsSpec, simulate, TrajectoryDataset};
use disknet::graph::{generate_ba, Graph};
use disknet::hyperbolic::embed_topology;
use disknet::pipeline::{DiskNet, TrainConfig};
use disknet::skeleton::{
    adjacency_csr, entropy_loss, physics_init, pretrain_assignment, pretrain_loss, reconstruction_loss, skeleton_adjacency, Aggregator,
    AssignmentModel,
};
use disknet::skeleton_ode::{SkeletonOde, Solver};
use disknet::superres::{cluster_by_degree, expand, RefinerBank};
use disknet::Result;

pub const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

fn random(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect(),
    }
}

/// Contracts `out` with a fixed random weight so every entry matters.
fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let (r, c) = tape.shape(out);
    let w = tape.constant(random(r, c, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)));
    let m = tape.mul(out, w);
    tape.sum(m)
}

static WORST: Mutex<f64> = Mutex::new(0.0);

/// Largest relative error seen by any check in this process.
#[allow(dead_code)]
pub fn worst_error() -> f64 {
    *WORST.lock().unwrap()
}

fn assert_grad<F>(name: &str, params: &mut ParamSet, loss: F)
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let report = finite_diff_check(params, H, loss).unwrap();
    {
        let mut w = WORST.lock().unwrap();
        *w = w.max(report.max_rel_error);
    }
    assert!(report.checked > 0, "{name}: nothing checked");
    assert!(
        report.passes(TOL),
        "{name}: max relative error {:.3e} at {:?} (analytic {}, numeric {})",
        report.max_rel_error,
        report.worst,
        report.worst_analytic,
        report.worst_numeric
    );
}

fn two_params(ra: (usize, usize), rb: (usize, usize), lo: f64, hi: f64, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    ps.add("a", random(ra.0, ra.1, lo, hi, &mut rng));
    ps.add("b", random(rb.0, rb.1, lo, hi, &mut rng));
    ps
}

fn ring(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
}

pub fn elementwise_and_binary_ops() {
    type Unary = fn(&mut Tape, Var) -> Var;
    let unary: [(&str, Unary, f64, f64); 7] = [
        ("tanh", |t, a| t.tanh(a), -2.0, 2.0),
        ("abs", |t, a| t.abs(a), 0.2, 1.5),
        ("square", |t, a| t.square(a), -2.0, 2.0),
        ("sqrt", |t, a| t.sqrt(a), 0.3, 3.0),
        ("xlogx", |t, a| t.xlogx(a), 0.05, 1.0),
        ("ln", |t, a| t.ln(a), 0.1, 3.0),
        ("scale", |t, a| t.scale(a, -1.7), -1.0, 1.0),
    ];
    for (i, (name, op, lo, hi)) in unary.into_iter().enumerate() {
        let mut ps = two_params((3, 4), (1, 1), lo, hi, i as u64);
        let a = ps.ids().next().unwrap();
        assert_grad(name, &mut ps, |t, b| {
            let y = op(t, b.var(a));
            Ok(project(t, y, 1))
        });
    }
    // abs on negative entries too
    let mut ps = two_params((3, 4), (1, 1), -1.5, -0.2, 40);
    let a = ps.ids().next().unwrap();
    assert_grad("abs-neg", &mut ps, |t, b| {
        let y = t.abs(b.var(a));
        Ok(project(t, y, 1))
    });

    type Binary = fn(&mut Tape, Var, Var) -> Var;
    let binary: [(&str, Binary); 5] = [
        ("add", |t, a, b| t.add(a, b)),
        ("add_scaled", |t, a, b| t.add_scaled(a, b, 0.3)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
        ("mse", |t, a, b| t.mse(a, b)),
    ];
    for (i, (name, op)) in binary.into_iter().enumerate() {
        let mut ps = two_params((4, 3), (4, 3), -1.0, 1.0, 10 + i as u64);
        let ids: Vec<_> = ps.ids().collect();
        assert_grad(name, &mut ps, |t, b| {
            let y = op(t, b.var(ids[0]), b.var(ids[1]));
            let (r, c) = t.shape(y);
            Ok(if (r, c) == (1, 1) { y } else { project(t, y, 2) })
        });
    }
}

pub fn matrix_ops() {
    let mut ps = two_params((4, 3), (3, 5), -1.0, 1.0, 20);
    let ids: Vec<_> = ps.ids().collect();
    assert_grad("matmul", &mut ps, |t, b| {
        let y = t.matmul(b.var(ids[0]), b.var(ids[1]));
        Ok(project(t, y, 3))
    });

    let mut ps = two_params((5, 3), (3, 2), -1.0, 1.0, 21);
    let bias = ps.add("bias", random(1, 2, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(9)));
    let ids: Vec<_> = ps.ids().collect();
    assert_grad("affine", &mut ps, |t, b| {
        let y = t.affine(b.var(ids[0]), b.var(ids[1]), b.var(bias));
        Ok(project(t, y, 4))
    });

    let mut ps = two_params((4, 6), (1, 1), -2.0, 2.0, 22);
    let a = ps.ids().next().unwrap();
    assert_grad("softmax_cols", &mut ps, |t, b| {
        let y = t.softmax_cols(b.var(a));
        Ok(project(t, y, 5))
    });
    assert_grad("transpose", &mut ps, |t, b| {
        let y = t.transpose(b.var(a));
        Ok(project(t, y, 6))
    });
    assert_grad("sum", &mut ps, |t, b| {
        let y = t.square(b.var(a));
        Ok(t.sum(y))
    });
    assert_grad("mean", &mut ps, |t, b| {
        let y = t.tanh(b.var(a));
        Ok(t.mean(y))
    });
    let idx = Arc::new(vec![3, 0, 0, 2, 1, 3, 3]);
    assert_grad("gather_rows", &mut ps, |t, b| {
        let y = t.gather_rows(b.var(a), Arc::clone(&idx));
        Ok(project(t, y, 7))
    });

    let mut ps = two_params((4, 2), (4, 3), -1.0, 1.0, 23);
    let ids: Vec<_> = ps.ids().collect();
    assert_grad("concat_cols", &mut ps, |t, b| {
        let y = t.concat_cols(&[b.var(ids[0]), b.var(ids[1]), b.var(ids[0])]);
        Ok(project(t, y, 8))
    });
    let mut ps = two_params((2, 3), (4, 3), -1.0, 1.0, 24);
    let ids: Vec<_> = ps.ids().collect();
    assert_grad("concat_rows", &mut ps, |t, b| {
        let y = t.concat_rows(&[b.var(ids[1]), b.var(ids[0])]);
        Ok(project(t, y, 9))
    });

    let csr = Arc::new(Csr::from_dense(&random(5, 4, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(3))));
    let mut ps = two_params((4, 3), (1, 1), -1.0, 1.0, 25);
    let a = ps.ids().next().unwrap();
    assert_grad("spmm", &mut ps, |t, b| {
        let y = t.spmm(Arc::clone(&csr), b.var(a));
        Ok(project(t, y, 10))
    });

    let mut ps = two_params((3, 4), (3 * 4, 2), -1.0, 1.0, 26);
    let ids: Vec<_> = ps.ids().collect();
    assert_grad("block_left_mul", &mut ps, |t, b| {
        let y = t.block_left_mul(b.var(ids[0]), b.var(ids[1]), 3);
        Ok(project(t, y, 11))
    });

    let mut ps = two_params((6, 2), (1, 1), -0.6, 0.6, 27);
    let a = ps.ids().next().unwrap();
    assert_grad("log_map_rows", &mut ps, |t, b| {
        let y = t.log_map_rows(b.var(a));
        Ok(project(t, y, 12))
    });
}

pub fn mlp_and_gcn_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut ps = ParamSet::new();
    let mlp = Mlp::new(&mut ps, "mlp", &[3, 6, 4, 2], Activation::Tanh, &mut rng);
    let x = random(5, 3, -1.0, 1.0, &mut rng);
    assert_grad("mlp", &mut ps, |t, b| {
        let xv = t.constant(x.clone());
        let y = mlp.forward(t, b, xv)?;
        Ok(project(t, y, 13))
    });

    let g = ring(7);
    let adj = Arc::new(gcn_normalized_adjacency(&g));
    let mut ps = ParamSet::new();
    let gcn = Gcn::new(&mut ps, "gcn", 3, 4, Activation::Tanh, &mut rng);
    let x = random(7, 3, -1.0, 1.0, &mut rng);
    assert_grad("gcn", &mut ps, |t, b| {
        let xv = t.constant(x.clone());
        let y = gcn.forward(t, b, &adj, xv)?;
        Ok(project(t, y, 14))
    });
}

pub fn assignment_losses_and_aggregation() {
    let g = generate_ba(10, 2, 3).unwrap();
    let embedding = embed_topology(&g);
    let init = physics_init(&embedding, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut ps = ParamSet::new();
    let model = AssignmentModel::new(&mut ps, &embedding, &init.super_points, 0.5, 8, &mut rng).unwrap();
    let adj = Arc::new(adjacency_csr(&g));
    let p0 = init.p0.hard_matrix();

    assert_grad("assignment", &mut ps, |t, b| {
        let p = model.forward(t, b)?;
        Ok(project(t, p, 15))
    });
    assert_grad("entropy_loss", &mut ps, |t, b| {
        let p = model.forward(t, b)?;
        Ok(entropy_loss(t, p))
    });
    assert_grad("reconstruction_loss", &mut ps, |t, b| {
        let p = model.forward(t, b)?;
        Ok(reconstruction_loss(t, p, &adj))
    });
    assert_grad("pretrain_loss", &mut ps, |t, b| {
        let p = model.forward(t, b)?;
        Ok(pretrain_loss(t, p, &p0))
    });

    let aggregator = Aggregator::new(&mut ps, 4, 3, &mut rng);
    let gcn = Arc::new(gcn_normalized_adjacency(&g).block_diag(2));
    let x = random(20, 4, -1.0, 1.0, &mut rng);
    assert_grad("aggregate_states", &mut ps, |t, b| {
        let p = model.forward(t, b)?;
        let xv = t.constant(x.clone());
        let y = aggregator.forward(t, b, &gcn, p, xv, 2)?;
        Ok(project(t, y, 16))
    });
}

pub fn latent_ode_through_both_solvers() {
    let g = generate_ba(10, 2, 4).unwrap();
    let hard: Vec<usize> = (0..10).map(|i| i % 5).collect();
    let op = Arc::new(row_normalized_with_self_loops(&skeleton_adjacency(&hard, 5, &g)));
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut ps = ParamSet::new();
    let ode = SkeletonOde::new(&mut ps, 3, 4, 2, &mut rng);
    let xs = random(5, 3, -1.0, 1.0, &mut rng);
    for solver in [Solver::Euler, Solver::Rk4] {
        assert_grad(&format!("ode-{solver:?}"), &mut ps, |t, b| {
            let xv = t.constant(xs.clone());
            let z0 = ode.encode(t, b, xv)?;
            let steps = ode.integrate(t, b, &op, z0, 5, 0.2, solver)?;
            let z = t.concat_cols(&steps);
            Ok(project(t, z, 17))
        });
    }
}

pub fn refiner_bank_and_expansion() {
    let g = generate_ba(10, 2, 5).unwrap();
    let clustering = cluster_by_degree(&g, 3, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut ps = ParamSet::new();
    let latent_id = ps.add("latent", random(2 * 4, 6, -1.0, 1.0, &mut rng));
    let bank = RefinerBank::new(&mut ps, clustering, 5, 6, 4, 3, Activation::Tanh, &mut rng);
    let hard: Vec<usize> = (0..10).map(|i| (i * 3) % 4).collect();
    let history = random(20, 5, -1.0, 1.0, &mut rng);
    assert_grad("refiners", &mut ps, |t, b| {
        let lifted = expand(t, b.var(latent_id), &hard, 4, 2);
        let hv = t.constant(history.clone());
        let y = bank.forward(t, b, hv, lifted, 2)?;
        Ok(project(t, y, 18))
    });
}

pub fn full_training_loss_on_toy_graph() {
    let g = generate_ba(10, 2, 6).unwrap();
    let spec = DynamicsSpec::new(DynamicsKind::FitzHughNagumo, 10, 6);
    let raw = simulate(&spec, &g, &spec.initial_state(6), 0.05, 200).unwrap();
    let ds = TrajectoryDataset::from_observed(raw, 3, 4).unwrap();
    let config = TrainConfig {
        lookback: 3,
        horizon: 4,
        hidden: 4,
        latent_dim: 2,
        assignment_hidden: 6,
        clusters: 2,
        model_dt: Some(0.5),
        ..Default::default()
    };
    let mut model = DiskNet::new(&config, &g, ds.dim()).unwrap();
    // sharpen P so that no argmax sits on a tie the finite differences could flip
    let p0 = physics_init(&model.embedding, config.gamma).unwrap().p0;
    let assignment = model.assignment.clone().unwrap();
    pretrain_assignment(&assignment, &mut model.params, &p0, 300, 0.01, Default::default()).unwrap();
    let soft = model.current_assignment().unwrap().soft;
    for c in 0..soft.cols {
        let mut col: Vec<f64> = (0..soft.rows).map(|r| soft.get(r, c)).collect();
        col.sort_by(|a, b| b.total_cmp(a));
        assert!(col[0] - col[1] > 1e-3, "near tie in column {c}");
    }
    let starts = [0, 5];
    let inputs = model.stack_inputs(&ds, &starts);
    let targets = model.stack_targets(&ds, &starts);
    let p = model.current_assignment().unwrap().soft;
    let latent_targets = model.skeleton_targets(&ds, &p, &starts).unwrap();
    let adj = Arc::clone(model.graph_adjacency());
    let mut ps = model.params.clone();
    assert_grad("full_loss", &mut ps, |t, b| {
        let x = t.constant(inputs.clone());
        let y = t.constant(targets.clone());
        let zs = t.constant(latent_targets.clone());
        let f = model.forward(t, b, &g, x, starts.len())?;
        let mut total = t.mse(f.prediction, y);
        let ls = t.mse(f.latent, zs);
        total = t.add_scaled(total, ls, 1.0);
        let le = entropy_loss(t, f.assignment);
        total = t.add_scaled(total, le, 0.1);
        let lr = reconstruction_loss(t, f.assignment, &adj);
        Ok(t.add_scaled(total, lr, 0.1))
    });
}
