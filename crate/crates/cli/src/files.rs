//! JSON and LP file plumbing for the command line.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use fusplace::fusion::FusionRuleSet;
use fusplace::graph::{CompGraph, GraphFile};
use fusplace::profiles::{effective_bandwidth, FusedCostTable, OverrideFile};
use fusplace::{Cluster, Problem};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_graph(path: &Path) -> Result<CompGraph> {
    let file: GraphFile = read_json(path)?;
    file.into_graph()
        .with_context(|| format!("invalid graph in {}", path.display()))
}

pub fn save_graph(path: &Path, g: &CompGraph) -> Result<()> {
    write_json(path, &GraphFile::from(g))
}

pub fn load_cluster(path: &Path) -> Result<Cluster> {
    let raw: Cluster = read_json(path)?;
    Cluster::new(raw.devices, raw.links)
        .with_context(|| format!("invalid cluster in {}", path.display()))
}

pub fn load_rules(path: Option<&Path>) -> Result<FusionRuleSet> {
    match path {
        Some(p) => read_json(p),
        None => Ok(FusionRuleSet::conv_bn_family()),
    }
}

pub fn load_overrides(path: Option<&Path>) -> Result<FusedCostTable> {
    match path {
        Some(p) => Ok(read_json::<OverrideFile>(p)?.into()),
        None => Ok(FusedCostTable::default()),
    }
}

pub fn problem(graph: &Path, cluster: &Path) -> Result<Problem> {
    let g = load_graph(graph)?;
    let c = load_cluster(cluster)?;
    let mesh = effective_bandwidth(&c)?;
    Ok(Problem::new(&g, &c, &mesh)?)
}
