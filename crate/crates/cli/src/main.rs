use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use disknet::dynamics::{
    build_dataset, downsample_stride, simulate_default, DynamicsKind, DynamicsSpec, Split, Trajectory,
    TrajectoryDataset, SIM_DT,
};
use disknet::graph::{generate_ba, generate_ws, load_edge_list, Graph};
use disknet::io::{load_trajectory, save_trajectory};
use disknet::pipeline::{
    evaluate, inputs_hash, load_model, persistence_baseline, save_model, sweep, train, write_metrics_csv, DiskNet,
    EvalReport, Summary, SweepParam, TrainConfig,
};
use disknet::skeleton::{assignment_csv, skeleton_adjacency, super_edges_csv};

mod config;

use config::{invalid, EvalSplit, GraphKind, GraphSection, RunConfig};

const SIDECAR_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "disknet", version, about = "Forecast network dynamics through a learned skeleton")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic graph as an edge list.
    GenerateGraph {
        #[arg(long, value_enum)]
        kind: GraphKind,
        /// Node count.
        #[arg(long)]
        n: usize,
        /// Edges attached per new node (ba).
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Even ring degree (ws).
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Rewiring probability (ws).
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate node dynamics on a graph and write the downsampled
    /// trajectory plus a JSON sidecar (`<out>.json`).
    Simulate {
        #[arg(long)]
        graph: PathBuf,
        /// hr, fhn or cr.
        #[arg(long)]
        dynamics: DynamicsKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Frames kept after downsampling.
        #[arg(long, default_value_t = disknet::dynamics::OBSERVATIONS)]
        observations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a run file; flags override the file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Degree clusters.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Per-step test MAE of a trained model as CSV.
    Eval {
        /// Model directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Observed trajectory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: EvalSplit,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also score the persistence baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Independent runs over values of gamma or k.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// gamma or k.
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write the node assignment, super-edge list, embedding and degree
    /// clusters of a trained model; with `--data` also the latent
    /// trajectory of the first test window.
    ExportSkeleton {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<disknet::Error>()) {
        Some(e) if e.is_numerical() => 3,
        Some(disknet::Error::Io(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenerateGraph { kind, n, m, k, p, seed, out } => {
            let section = GraphSection {
                kind,
                n,
                m,
                k,
                p,
                seed,
                path: None,
            };
            let graph = build_graph(&section)?;
            graph.write_edge_list(&out)?;
            println!("{} nodes, {} edges -> {}", graph.node_count(), graph.edge_count(), out.display());
            Ok(())
        }
        Command::Simulate {
            graph,
            dynamics,
            seed,
            observations,
            out,
        } => {
            let graph = load_edge_list(&graph)?;
            let spec = DynamicsSpec::new(dynamics, graph.node_count(), seed);
            let raw = simulate_default(&spec, &graph, seed)?;
            let dataset = build_dataset(&raw, observations, 12, 120)?;
            save_trajectory(&out, &dataset.observed)?;
            let sidecar = Sidecar::new(&spec, seed, &raw, &dataset);
            let path = sidecar_path(&out);
            std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
            println!(
                "{} raw frames -> {} observations -> {} (+ {})",
                raw.len,
                dataset.len(),
                out.display(),
                path.display()
            );
            Ok(())
        }
        Command::Train {
            config,
            out_dir,
            seed,
            epochs,
            gamma,
            k,
        } => {
            let mut run = RunConfig::load(&config)?;
            override_fields(&mut run, seed, epochs, gamma, k);
            let tc = run.train_config()?;
            let (graph, dataset, hash) = prepare(&run)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("config.toml"), run.to_toml())?;
            let (model, log) = train(&tc, &graph, &dataset)?;
            save_model(&out_dir.join("model"), &model, &graph)?;
            save_trajectory(out_dir.join("data.dskt"), &dataset.observed)?;
            std::fs::write(out_dir.join("training_log.json"), serde_json::to_string_pretty(&log)?)?;
            let mut report = evaluate(&model, &graph, &dataset, split_of(run.eval.split))?;
            report.seconds_per_iteration = log.seconds_per_iteration;
            write_run_outputs(&out_dir, "train", &report, &model.config, hash)?;
            println!(
                "mean MAE {:.6} occupancy {:.3} ({} windows) -> {}",
                report.mean_mae,
                report.occupancy,
                report.windows,
                out_dir.display()
            );
            Ok(())
        }
        Command::Eval {
            model,
            data,
            split,
            out,
            baseline,
        } => {
            let (model, graph) = load_model(&model)?;
            let observed = load_trajectory(&data)?;
            let dataset = TrajectoryDataset::from_observed(observed, model.config.lookback, model.config.horizon)?;
            let report = evaluate(&model, &graph, &dataset, split_of(split))?;
            let persistence = if baseline {
                Some(persistence_baseline(&dataset, split_of(split))?)
            } else {
                None
            };
            let mut runs: Vec<(&str, &EvalReport)> = vec![("model", &report)];
            if let Some(p) = &persistence {
                runs.push(("persistence", p));
            }
            match out {
                Some(path) => write_metrics_csv(std::io::BufWriter::new(std::fs::File::create(path)?), runs)?,
                None => write_metrics_csv(std::io::stdout().lock(), runs)?,
            }
            eprintln!("mean MAE {:.6} occupancy {:.3}", report.mean_mae, report.occupancy);
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            out_dir,
            seed,
            epochs,
        } => {
            if values.is_empty() {
                bail!(invalid("--values needs at least one value"));
            }
            let mut run = RunConfig::load(&config)?;
            override_fields(&mut run, seed, epochs, None, None);
            let base = run.train_config()?;
            let (graph, dataset, hash) = prepare(&run)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("config.toml"), run.to_toml())?;
            let runs = sweep(&base, param, &values, &graph, &dataset, run.eval.threads);
            let mut ok = Vec::new();
            let mut failures = 0;
            for r in &runs {
                let id = format!("{param}={}", r.value);
                match &r.outcome {
                    Ok(report) => {
                        let config = param.apply(&base, r.value)?;
                        let summary = Summary::new(&id, report, &config, hash.clone());
                        let name = format!("summary_{param}_{}.json", r.value);
                        std::fs::write(out_dir.join(name), serde_json::to_string_pretty(&summary)?)?;
                        println!("{id}: mean MAE {:.6} occupancy {:.3}", report.mean_mae, report.occupancy);
                        ok.push((id, report));
                    }
                    Err(msg) => {
                        failures += 1;
                        eprintln!("{id}: failed: {msg}");
                    }
                }
            }
            let file = std::io::BufWriter::new(std::fs::File::create(out_dir.join("metrics.csv"))?);
            write_metrics_csv(file, ok.iter().map(|(id, r)| (id.as_str(), *r)))?;
            std::fs::write(out_dir.join("sweep.json"), serde_json::to_string_pretty(&runs)?)?;
            if failures == runs.len() {
                bail!("every sweep run failed");
            }
            Ok(())
        }
        Command::ExportSkeleton { model, out, data } => {
            let (model, graph) = load_model(&model)?;
            export_skeleton(&model, &graph, &out, data.as_deref())
        }
    }
}

fn override_fields(run: &mut RunConfig, seed: Option<u64>, epochs: Option<usize>, gamma: Option<f64>, k: Option<usize>) {
    if let Some(s) = seed {
        run.train.seed = s;
    }
    if let Some(e) = epochs {
        run.train.epochs = e;
    }
    if let Some(g) = gamma {
        run.model.gamma = g;
    }
    if let Some(k) = k {
        run.model.clusters = k;
    }
}

fn split_of(split: EvalSplit) -> Split {
    match split {
        EvalSplit::Val => Split::Val,
        EvalSplit::Test => Split::Test,
    }
}

fn build_graph(section: &GraphSection) -> anyhow::Result<Graph> {
    Ok(match section.kind {
        GraphKind::Ba => generate_ba(section.n, section.m, section.seed)?,
        GraphKind::Ws => generate_ws(section.n, section.k, section.p, section.seed)?,
        GraphKind::File => {
            let path = section
                .path
                .as_ref()
                .ok_or_else(|| invalid("graph.kind = \"file\" needs graph.path"))?;
            load_edge_list(path)?
        }
    })
}

/// Graph, dataset and the hash of the inputs that produced them.
fn prepare(run: &RunConfig) -> anyhow::Result<(Graph, TrajectoryDataset, String)> {
    let graph = build_graph(&run.graph)?;
    let observed = match &run.dynamics.path {
        Some(path) => load_trajectory(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let spec = DynamicsSpec::new(run.dynamics.kind, graph.node_count(), run.dynamics.seed);
            let raw = simulate_default(&spec, &graph, run.dynamics.seed)?;
            disknet::dynamics::downsample(&raw, run.dataset.observations)?
        }
    };
    if observed.node_count != graph.node_count() {
        bail!(invalid(format!(
            "trajectory has {} nodes, graph {}",
            observed.node_count,
            graph.node_count()
        )));
    }
    let mut bytes = Vec::new();
    disknet::io::write_trajectory(&mut bytes, &observed)?;
    let edges = graph.to_edge_list();
    let config = run.to_toml();
    let hash = inputs_hash([
        ("graph", edges.as_bytes()),
        ("trajectory", bytes.as_slice()),
        ("config", config.as_bytes()),
    ]);
    let dataset = TrajectoryDataset::from_observed(observed, run.dataset.lookback, run.dataset.horizon)?;
    Ok((graph, dataset, hash))
}

fn write_run_outputs(dir: &Path, id: &str, report: &EvalReport, config: &TrainConfig, hash: String) -> anyhow::Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(dir.join("metrics.csv"))?);
    write_metrics_csv(file, [(id, report)])?;
    let summary = Summary::new(id, report, config, hash);
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn export_skeleton(model: &DiskNet, graph: &Graph, out: &Path, data: Option<&Path>) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let assignment = model.current_assignment()?;
    std::fs::write(out.join("assignment.csv"), assignment_csv(&assignment.hard))?;
    let skeleton = skeleton_adjacency(&assignment.hard, model.super_count, graph);
    std::fs::write(out.join("super_edges.csv"), super_edges_csv(&skeleton))?;
    let mut embedding = model.embedding.clone();
    if model.assignment.is_some() {
        embedding.super_points = model.super_points();
    }
    std::fs::write(out.join("embedding.csv"), embedding.to_csv(Some(&assignment.hard)))?;
    std::fs::write(out.join("clusters.csv"), model.refiners.clustering.to_csv(graph))?;
    if let Some(path) = data {
        let observed = load_trajectory(path)?;
        let dataset = TrajectoryDataset::from_observed(observed, model.config.lookback, model.config.horizon)?;
        let start = *dataset
            .windows(Split::Test)
            .first()
            .ok_or_else(|| invalid("no test window for the latent export"))?;
        let latent = model.latent_trajectory(graph, &dataset, start)?;
        save_trajectory(out.join("latent.dskt"), &latent)?;
    }
    println!(
        "{} nodes -> {} super-nodes (occupancy {:.3}) -> {}",
        graph.node_count(),
        model.super_count,
        assignment.occupancy(),
        out.display()
    );
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    format_version: u32,
    spec: &'a DynamicsSpec,
    seed: u64,
    sim_dt: f64,
    raw_frames: usize,
    stride: usize,
    observations: usize,
    observation_dt: f64,
    train_end: usize,
    val_end: usize,
    mean: &'a [f64],
    std: &'a [f64],
}

impl<'a> Sidecar<'a> {
    fn new(spec: &'a DynamicsSpec, seed: u64, raw: &Trajectory, dataset: &'a TrajectoryDataset) -> Self {
        Sidecar {
            format_version: SIDECAR_VERSION,
            spec,
            seed,
            sim_dt: SIM_DT,
            raw_frames: raw.len,
            stride: downsample_stride(raw.len, dataset.len()),
            observations: dataset.len(),
            observation_dt: dataset.observed.dt,
            train_end: dataset.train_end,
            val_end: dataset.val_end,
            mean: &dataset.mean,
            std: &dataset.std,
        }
    }
}
