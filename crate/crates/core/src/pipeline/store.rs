use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::DiskNet;
use crate::error::{Error, Result};
use crate::graph::{load_edge_list, Graph};
use crate::io::{read_checkpoint, write_checkpoint};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.ckpt";
pub const GRAPH_FILE: &str = "graph.edges";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: TrainConfig,
    pub node_count: usize,
    pub dim: usize,
    pub super_count: usize,
}

/// Writes the manifest, parameters and a copy of the graph into `dir`.
pub fn save_model(dir: &Path, model: &DiskNet, graph: &Graph) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format_version: MODEL_FORMAT_VERSION,
        config: model.config.clone(),
        node_count: model.node_count,
        dim: model.dim,
        super_count: model.super_count,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    let mut out = BufWriter::new(fs::File::create(dir.join(PARAMS_FILE))?);
    write_checkpoint(&mut out, &model.params.to_named())?;
    out.flush()?;
    graph.write_edge_list(dir.join(GRAPH_FILE))?;
    Ok(())
}

/// Rebuilds a saved model together with its graph.
pub fn load_model(dir: &Path) -> Result<(DiskNet, Graph)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {}",
            manifest.format_version
        )));
    }
    let graph = load_edge_list(dir.join(GRAPH_FILE))?;
    if graph.node_count() != manifest.node_count {
        return Err(Error::Format(format!(
            "stored graph has {} nodes, manifest says {}",
            graph.node_count(),
            manifest.node_count
        )));
    }
    let mut model = DiskNet::new(&manifest.config, &graph, manifest.dim)?;
    let tensors = read_checkpoint(BufReader::new(fs::File::open(dir.join(PARAMS_FILE))?))?;
    model.params.load_named(&tensors)?;
    Ok((model, graph))
}
