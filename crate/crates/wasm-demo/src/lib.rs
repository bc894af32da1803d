//! Browser bindings: generate a synthetic graph, coarsen it, and place it on
//! a small homogeneous-link cluster. Every call takes and returns JSON text.

use fusplace::bench::{gen_synthetic, synthetic_cluster, Method, SynthSpec};
use fusplace::fusion::gcof;
use fusplace::graph::{CompGraph, GraphFile};
use fusplace::{effective_bandwidth, FusionRuleSet, PlacementFile, Problem, SolveBudget};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Exact searches stop after this many nodes; the browser has no usable clock.
pub const NODE_LIMIT: u64 = 200_000;

#[derive(Serialize)]
struct Coarsened {
    before: usize,
    after: usize,
    graph: GraphFile,
}

#[derive(Serialize)]
struct Bar {
    node: u32,
    label: String,
    /// Row in the chart: `dev N` for operators, `A->B` for transfers.
    lane: String,
    start_s: f64,
    end_s: f64,
}

#[derive(Serialize)]
struct Placed {
    method: &'static str,
    makespan_s: f64,
    status: String,
    nodes: u64,
    placement: PlacementFile,
    bars: Vec<Bar>,
}

fn parse_graph(json: &str) -> Result<CompGraph, String> {
    let file: GraphFile = serde_json::from_str(json).map_err(|e| format!("graph json: {e}"))?;
    file.into_graph().map_err(|e| e.to_string())
}

pub fn generate_json(
    depth: usize,
    width: usize,
    density: f64,
    edge_prob: f64,
    devices: u32,
    seed: u32,
) -> Result<String, String> {
    let spec = SynthSpec {
        density,
        edge_prob,
        ..SynthSpec::new(depth, width, (1..=devices).collect())
    };
    let g = gen_synthetic(&spec, u64::from(seed)).map_err(|e| e.to_string())?;
    serde_json::to_string(&GraphFile::from(&g)).map_err(|e| e.to_string())
}

pub fn coarsen_json(graph: &str) -> Result<String, String> {
    let g = parse_graph(graph)?;
    let c = gcof(&g, &FusionRuleSet::conv_bn_family()).map_err(|e| e.to_string())?;
    let out = Coarsened {
        before: g.len(),
        after: c.len(),
        graph: GraphFile::from(&c),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn place_json(graph: &str, method: &str, bandwidth_bps: f64) -> Result<String, String> {
    let g = parse_graph(graph)?;
    let mut devices: Vec<u32> = g
        .nodes()
        .iter()
        .flat_map(|n| n.compute_time.keys().copied())
        .collect();
    devices.sort_unstable();
    devices.dedup();
    let cluster = synthetic_cluster(
        &devices,
        u64::MAX / (devices.len() as u64 + 1),
        bandwidth_bps,
    )
    .map_err(|e| e.to_string())?;
    let mesh = effective_bandwidth(&cluster).map_err(|e| e.to_string())?;
    let p = Problem::new(&g, &cluster, &mesh).map_err(|e| e.to_string())?;
    let method: Method = method.parse().map_err(|e: fusplace::Error| e.to_string())?;
    let budget = SolveBudget {
        node_limit: Some(NODE_LIMIT),
        ..SolveBudget::default()
    };
    let sol = method.run(&p, budget).map_err(|e| e.to_string())?;
    let s = &sol.schedule;
    let mut bars: Vec<Bar> = (0..p.n_ops())
        .map(|i| Bar {
            node: p.op_ids[i],
            label: g.nodes()[i].op_type.clone(),
            lane: format!("dev {}", p.device_ids[s.assignment[i]]),
            start_s: s.op_start[i],
            end_s: s.op_end[i],
        })
        .collect();
    for (q, f) in p.flows.iter().enumerate() {
        if let Some((a, b)) = s.flow_channel[q] {
            bars.push(Bar {
                node: f.id,
                label: format!("{}->{}", p.op_ids[f.src], p.op_ids[f.dst]),
                lane: format!("{}->{}", p.device_ids[a], p.device_ids[b]),
                start_s: s.flow_start[q],
                end_s: s.flow_end[q],
            });
        }
    }
    let out = Placed {
        method: method.label(),
        makespan_s: sol.objective_s,
        status: format!("{:?}", sol.status),
        nodes: sol.stats.nodes,
        placement: PlacementFile::from_schedule(&p, s),
        bars,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Seeded synthetic graph as graph-file JSON.
#[wasm_bindgen]
pub fn generate(
    depth: usize,
    width: usize,
    density: f64,
    edge_prob: f64,
    devices: u32,
    seed: u32,
) -> Result<String, JsError> {
    generate_json(depth, width, density, edge_prob, devices, seed).map_err(|e| JsError::new(&e))
}

/// `{before, after, graph}` for the default conv/bn rule family.
#[wasm_bindgen]
pub fn coarsen(graph: &str) -> Result<String, JsError> {
    coarsen_json(graph).map_err(|e| JsError::new(&e))
}

/// Places `graph` on a full mesh of its profiled devices with `method`
/// (`exact`, `etf` or `sct`); returns the placement plus Gantt bars.
#[wasm_bindgen]
pub fn place(graph: &str, method: &str, bandwidth_bps: f64) -> Result<String, JsError> {
    place_json(graph, method, bandwidth_bps).map_err(|e| JsError::new(&e))
}
