//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset, e.g.
//! `cargo test --test acceptance -- 1 3 5`.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use disknet::diffprog::ParamSet;
use disknet::dynamics::{
    build_dataset, simulate, simulate_default, DynamicsKind, DynamicsSpec, HindmarshRoseParams, RosslerParams, Split,
    TrajectoryDataset, OBSERVATIONS,
};
use disknet::graph::{generate_ba, generate_ws, Graph};
use disknet::hyperbolic::{distance, embed_topology, exp_map_origin, from_polar, log_map_origin, mobius_add};
use disknet::pipeline::{persistence_baseline, train_and_evaluate, AssignmentKind, EvalReport, TrainConfig};
use disknet::skeleton::{physics_init, pretrain_assignment, skeleton_adjacency, AssignmentModel};
use disknet::skeleton_ode::{linear_decay_error, Solver};

#[path = "support/gradchecks.rs"]
mod gradchecks;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(seconds: f64, limit: f64) -> bool {
    seconds < limit
}

fn hyperbolic_suite() -> Outcome {
    let t0 = Instant::now();
    let mut worst_dist = 0.0f64;
    for i in 1..=9 {
        let r = i as f64 / 10.0;
        worst_dist = worst_dist.max((distance([0.0, 0.0], [r, 0.0]) - 2.0 * r.atanh()).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut point = |max: f64| from_polar(max * rng.random_range(0.0f64..1.0).sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
    let mut worst_mobius = 0.0f64;
    let mut worst_round = 0.0f64;
    let mut violations = 0;
    for _ in 0..1000 {
        let (a, b, c) = (point(0.95), point(0.95), point(0.95));
        let id = mobius_add([0.0, 0.0], a);
        let inv = mobius_add([-a[0], -a[1]], a);
        worst_mobius = worst_mobius.max((id[0] - a[0]).abs().max((id[1] - a[1]).abs())).max(inv[0].abs().max(inv[1].abs()));
        let back = exp_map_origin(log_map_origin(a));
        worst_round = worst_round.max((back[0] - a[0]).abs().max((back[1] - a[1]).abs()));
        if distance(a, c) > distance(a, b) + distance(b, c) + 1e-9 {
            violations += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst_dist < 1e-10 && worst_mobius < 1e-12 && worst_round < 1e-9 && violations == 0 && within(secs, 1.0),
        format!(
            "radial {worst_dist:.1e}, mobius {worst_mobius:.1e}, round trip {worst_round:.1e}, \
             triangle violations {violations}/1000, {secs:.2}s"
        ),
    )
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let checks: [(&str, fn()); 7] = [
        ("elementwise", gradchecks::elementwise_and_binary_ops),
        ("matrix", gradchecks::matrix_ops),
        ("layers", gradchecks::mlp_and_gcn_layers),
        ("assignment", gradchecks::assignment_losses_and_aggregation),
        ("ode", gradchecks::latent_ode_through_both_solvers),
        ("refiners", gradchecks::refiner_bank_and_expansion),
        ("full loss", gradchecks::full_training_loss_on_toy_graph),
    ];
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, check)| catch_unwind(check).is_err())
        .map(|(name, _)| *name)
        .collect();
    let secs = t0.elapsed().as_secs_f64();
    let worst = gradchecks::worst_error();
    outcome(
        failed.is_empty() && worst < gradchecks::TOL && within(secs, 60.0),
        format!("{} groups, worst relative error {worst:.2e}, failed {failed:?}, {secs:.1}s", checks.len()),
    )
}

fn solver_order() -> Outcome {
    let t0 = Instant::now();
    let ratio = |s| linear_decay_error(s, 20) / linear_decay_error(s, 40);
    let (e, r) = (ratio(Solver::Euler), ratio(Solver::Rk4));
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        (1.8..=2.2).contains(&e) && (12.0..=20.0).contains(&r) && within(secs, 1.0),
        format!("euler ratio {e:.3}, rk4 ratio {r:.3}, {secs:.3}s"),
    )
}

fn dynamics_fidelity() -> Outcome {
    // FHN: bisection root of x^3 + 11.5x + 7, x2 from the nullcline
    let f = |x: f64| x * x * x + 11.5 * x + 7.0;
    let (mut lo, mut hi) = (-1.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let n = 10;
    let lonely = Graph::from_edges(n, []).unwrap();
    let spec = DynamicsSpec::new(DynamicsKind::FitzHughNagumo, n, 0);
    let fixed: Vec<f64> = (0..n).flat_map(|_| [x, 7.0 + 12.5 * x]).collect();
    let traj = simulate(&spec, &lonely, &fixed, 0.01, 100).unwrap();
    let drift = (0..=100)
        .flat_map(|t| traj.frame(t).into_iter().zip(fixed.clone()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);

    // Rossler with zero coupling against a per-node Euler oracle
    let g = generate_ba(20, 2, 5).unwrap();
    let params = RosslerParams {
        epsilon: 0.0,
        ..RosslerParams::default()
    };
    let spec = DynamicsSpec::with_rossler(params, 20, 5);
    let freq = match &spec.params {
        disknet::dynamics::DynamicsParams::CoupledRossler { frequencies, .. } => frequencies.clone(),
        _ => unreachable!(),
    };
    let x0 = spec.initial_state(6);
    let (dt, steps) = (0.01, 200);
    let traj = simulate(&spec, &g, &x0, dt, steps).unwrap();
    let mut oracle: Vec<[f64; 3]> = x0.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let mut rossler_err = 0.0f64;
    for t in 1..=steps {
        for (i, s) in oracle.iter_mut().enumerate() {
            let w = freq[i];
            let d = [
                -w * s[1] - s[2],
                w * s[0] + params.a * s[1],
                params.b + s[2] * (s[0] + params.c),
            ];
            for k in 0..3 {
                s[k] += dt * d[k];
                rossler_err = rossler_err.max((traj.get(i, t, k) - s[k]).abs());
            }
        }
    }

    let hr = HindmarshRoseParams::default();
    let mu = hr.mu(hr.omega_syn);
    outcome(
        drift < 1e-8 && rossler_err <= 1e-12 && mu == 0.5,
        format!("fhn drift {drift:.1e}, rossler max deviation {rossler_err:.1e}, hr mu {mu}"),
    )
}

fn skeleton_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut mismatches = 0;
    let mut mass_failures = 0;
    for _ in 0..20 {
        let n = rng.random_range(2..=10usize);
        let s = rng.random_range(1..=n);
        let edges: Vec<(usize, usize)> = (0..rng.random_range(0..=n * 2))
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .filter(|(u, v)| u != v)
            .collect();
        let g = Graph::from_edges(n, edges).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..s)).collect();

        // dense P A P^T in integers
        let mut dense = vec![vec![0i64; s]; s];
        for a in 0..s {
            for b in 0..s {
                for u in 0..n {
                    for v in 0..n {
                        let p = (labels[u] == a) as i64 * (labels[v] == b) as i64;
                        dense[a][b] += p * g.has_edge(u, v) as i64;
                    }
                }
            }
        }
        // every undirected edge counted from both ends
        let mut brute = vec![vec![0i64; s]; s];
        for (u, v) in g.edges() {
            brute[labels[u]][labels[v]] += 1;
            brute[labels[v]][labels[u]] += 1;
        }
        let lib = skeleton_adjacency(&labels, s, &g);
        let lib: Vec<Vec<i64>> = (0..s).map(|a| (0..s).map(|b| lib.get(a, b) as i64).collect()).collect();
        if dense != brute || lib != brute {
            mismatches += 1;
        }
        let total: i64 = brute.iter().flatten().sum();
        if total != 2 * g.edge_count() as i64 || lib.iter().flatten().sum::<i64>() != total {
            mass_failures += 1;
        }
    }
    outcome(
        mismatches == 0 && mass_failures == 0,
        format!("20 graphs, {mismatches} mismatches, {mass_failures} mass failures"),
    )
}

fn pretraining() -> Outcome {
    let t0 = Instant::now();
    let cfg = TrainConfig::default();
    let g = generate_ba(200, 3, 0).unwrap();
    let e = embed_topology(&g);
    let init = physics_init(&e, 0.5).unwrap();
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = AssignmentModel::new(&mut params, &e, &init.super_points, 0.5, cfg.assignment_hidden, &mut rng).unwrap();
    let losses = pretrain_assignment(&model, &mut params, &init.p0, 500, cfg.pretrain_lr, cfg.gradient_scale).unwrap();
    let p = model.compute(&params).unwrap();
    let dev = p
        .soft
        .data
        .iter()
        .zip(&init.p0.soft.data)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / p.soft.len() as f64;
    let agree = p.agreement(&init.p0);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        losses.len() <= 500 && dev < 0.05 && agree >= 0.95 && within(secs, 120.0),
        format!("{} iterations, mean |P-P0| {dev:.4}, agreement {:.1}%, {secs:.1}s", losses.len(), 100.0 * agree),
    )
}

/// Settings for the trained-model criteria, scaled down from the protocol
/// defaults so that all of them fit a single-core budget.
fn desk(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 10,
        finetune_epochs: 5,
        hidden: 32,
        latent_dim: 8,
        seed,
        ..TrainConfig::default()
    }
}

fn ba_dataset(kind: DynamicsKind, seed: u64) -> (Graph, TrajectoryDataset) {
    let g = generate_ba(200, 3, seed).unwrap();
    (g.clone(), dataset(kind, &g, seed))
}

fn dataset(kind: DynamicsKind, g: &Graph, seed: u64) -> TrajectoryDataset {
    let spec = DynamicsSpec::new(kind, g.node_count(), seed);
    let raw = simulate_default(&spec, g, seed).unwrap();
    build_dataset(&raw, OBSERVATIONS, 12, 120).unwrap()
}

static RUNS: Mutex<Option<HashMap<String, EvalReport>>> = Mutex::new(None);

/// Trains and scores on the test split, memoized per label so criteria can
/// share runs.
fn run(label: String, cfg: &TrainConfig, g: &Graph, ds: &TrajectoryDataset) -> EvalReport {
    if let Some(r) = RUNS.lock().unwrap().get_or_insert_with(HashMap::new).get(&label) {
        return r.clone();
    }
    let t0 = Instant::now();
    let report = train_and_evaluate(cfg, g, ds).unwrap();
    println!("    {label}: mae {:.4}, occupancy {:.2}, {:.0}s", report.mean_mae, report.occupancy, t0.elapsed().as_secs_f64());
    RUNS.lock().unwrap().get_or_insert_with(HashMap::new).insert(label, report.clone());
    report
}

fn end_to_end_ordering() -> Outcome {
    let t0 = Instant::now();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..3 {
        let (g, ds) = ba_dataset(DynamicsKind::FitzHughNagumo, seed);
        let learned = run(format!("ba/fhn learned seed {seed}"), &desk(seed), &g, &ds);
        let random_cfg = TrainConfig {
            assignment: AssignmentKind::Random,
            ..desk(seed)
        };
        let random = run(format!("ba/fhn random seed {seed}"), &random_cfg, &g, &ds);
        let persistence = persistence_baseline(&ds, Split::Test).unwrap();
        if learned.mean_mae < persistence.mean_mae && learned.mean_mae < random.mean_mae {
            wins += 1;
        }
        rows.push(format!(
            "{:.4}/{:.4}/{:.4}",
            learned.mean_mae, random.mean_mae, persistence.mean_mae
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        wins >= 2 && within(secs, 1800.0),
        format!("learned/random/persistence {}, ordering in {wins}/3, {:.1} min", rows.join(", "), secs / 60.0),
    )
}

fn init_ablation() -> Outcome {
    let mut holds = 0;
    let mut rows = Vec::new();
    for seed in 0..3 {
        let (g, ds) = ba_dataset(DynamicsKind::CoupledRossler, seed);
        let with = run(format!("ba/cr init seed {seed}"), &desk(seed), &g, &ds);
        let cold = TrainConfig {
            physics_init: false,
            ..desk(seed)
        };
        let without = run(format!("ba/cr no-init seed {seed}"), &cold, &g, &ds);
        if without.mean_mae >= with.mean_mae {
            holds += 1;
        }
        rows.push(format!("{:.4}/{:.4}", without.mean_mae, with.mean_mae));
    }
    outcome(holds >= 2, format!("no-init/init {}, ordering in {holds}/3", rows.join(", ")))
}

fn sensitivity() -> Outcome {
    let (g, ds) = ba_dataset(DynamicsKind::CoupledRossler, 0);
    let coarse_cfg = TrainConfig {
        gamma: 0.01,
        ..desk(0)
    };
    let coarse = run("ba/cr gamma 0.01 seed 0".into(), &coarse_cfg, &g, &ds);
    let fine = run("ba/cr init seed 0".into(), &desk(0), &g, &ds);

    let ws = generate_ws(200, 4, 0.1, 0).unwrap();
    let wds = dataset(DynamicsKind::FitzHughNagumo, &ws, 0);
    let k1 = run("ws/fhn k 1".into(), &TrainConfig { clusters: 1, ..desk(0) }, &ws, &wds);
    let k7 = run("ws/fhn k 7".into(), &TrainConfig { clusters: 7, ..desk(0) }, &ws, &wds);
    outcome(
        coarse.occupancy >= fine.occupancy && k7.mean_mae <= k1.mean_mae,
        format!(
            "occupancy {:.2} (gamma 0.01) vs {:.2} (gamma 0.5); mae {:.4} (k 7) vs {:.4} (k 1)",
            coarse.occupancy, fine.occupancy, k7.mean_mae, k1.mean_mae
        ),
    )
}

fn protocol() -> Outcome {
    let (_, ds) = ba_dataset(DynamicsKind::FitzHughNagumo, 0);
    let split = (ds.train_end, ds.val_end - ds.train_end, ds.len() - ds.val_end);
    let windows = ds.windows(Split::Train).len();
    let d = TrainConfig::default();
    outcome(
        ds.len() == 500 && split == (300, 100, 100) && windows == 169 && (d.batch_size, d.epochs) == (8, 50) && d.learning_rate == 0.001,
        format!(
            "{} observations, split {split:?}, {windows} train windows, batch {} epochs {} lr {}",
            ds.len(),
            d.batch_size,
            d.epochs,
            d.learning_rate
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("hyperbolic geometry", hyperbolic_suite),
        ("gradient correctness", gradient_checks),
        ("solver order", solver_order),
        ("dynamics fidelity", dynamics_fidelity),
        ("skeleton algebra", skeleton_algebra),
        ("assignment pretraining", pretraining),
        ("end-to-end ordering", end_to_end_ordering),
        ("initialization ablation", init_ablation),
        ("sensitivity trends", sensitivity),
        ("protocol conformance", protocol),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    // silence the default hook; panics are reported as failures below
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {:<24} {}  {}",
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
