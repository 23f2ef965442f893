use disknet::dynamics::{build_dataset, simulate_default, DynamicsKind, DynamicsSpec, Split, TrajectoryDataset};
use disknet::graph::{generate_ba, Graph};
use disknet::pipeline::{evaluate, load_model, save_model, train, AssignmentKind, Phase, TrainConfig};

fn tiny() -> (Graph, TrajectoryDataset) {
    let g = generate_ba(10, 2, 4).unwrap();
    let spec = DynamicsSpec::new(DynamicsKind::FitzHughNagumo, 10, 4);
    let raw = simulate_default(&spec, &g, 4).unwrap();
    (g, build_dataset(&raw, 120, 4, 8).unwrap())
}

fn small_config() -> TrainConfig {
    TrainConfig {
        gamma: 1.0,
        clusters: 1,
        lookback: 4,
        horizon: 8,
        epochs: 5,
        hidden: 16,
        latent_dim: 4,
        assignment_hidden: 16,
        pretrain_iters: 20,
        finetune_epochs: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn identity_skeleton_loss_decreases() {
    let (g, ds) = tiny();
    let (_, log) = train(&small_config(), &g, &ds).unwrap();
    let losses: Vec<f64> = log
        .epochs
        .iter()
        .filter(|e| e.phase == Phase::EndToEnd)
        .map(|e| e.loss)
        .collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn training_is_deterministic() {
    let (g, ds) = tiny();
    let cfg = TrainConfig {
        gamma: 0.5,
        epochs: 2,
        ..small_config()
    };
    let (a, la) = train(&cfg, &g, &ds).unwrap();
    let (b, lb) = train(&cfg, &g, &ds).unwrap();
    let loss = |l: &disknet::pipeline::TrainingLog| l.epochs.iter().map(|e| e.loss).collect::<Vec<_>>();
    assert_eq!(loss(&la), loss(&lb));
    assert_eq!(la.pretrain, lb.pretrain);
    let ra = evaluate(&a, &g, &ds, Split::Test).unwrap();
    let rb = evaluate(&b, &g, &ds, Split::Test).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn saved_model_predicts_identically() {
    let (g, ds) = tiny();
    for assignment in [AssignmentKind::Learned, AssignmentKind::Degree] {
        let cfg = TrainConfig {
            gamma: 0.5,
            epochs: 1,
            assignment,
            ..small_config()
        };
        let (model, _) = train(&cfg, &g, &ds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(dir.path(), &model, &g).unwrap();
        let (back, graph) = load_model(dir.path()).unwrap();
        assert_eq!(graph.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        let starts = ds.windows(Split::Val);
        assert_eq!(back.config, model.config);
        assert_eq!(
            model.predict(&g, &ds, &starts).unwrap(),
            back.predict(&graph, &ds, &starts).unwrap(),
            "{assignment}"
        );
    }
}

#[test]
fn mismatched_windows_are_rejected() {
    let (g, ds) = tiny();
    let cfg = TrainConfig {
        horizon: 9,
        ..small_config()
    };
    assert!(train(&cfg, &g, &ds).is_err());
    let other = generate_ba(11, 2, 0).unwrap();
    assert!(train(&small_config(), &other, &ds).is_err());
}
