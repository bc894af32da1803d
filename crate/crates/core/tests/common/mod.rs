#![allow(dead_code)]

use fusplace::graph::{CompGraph, DeviceId, FlowEdge, NodeId, OpNode};
use fusplace::profiles::{effective_bandwidth, Cluster, Device, Link};
use fusplace::Problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TYPES: [&str; 6] = ["conv", "bn", "relu", "add", "matmul", "pool"];

/// Random DAG with forward edges only (`i < j`), ids `1..=n`.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    n: usize,
    edge_prob: f64,
    devices: &[DeviceId],
) -> CompGraph {
    let mut nodes = Vec::with_capacity(n);
    for i in 1..=n {
        let ty = TYPES[rng.gen_range(0..TYPES.len())];
        let mem = rng.gen_range(1..=100u64);
        let times: Vec<(DeviceId, f64)> = devices
            .iter()
            .map(|&k| (k, rng.gen_range(1..=40) as f64 * 0.25))
            .collect();
        nodes.push(OpNode::new(i as NodeId, ty, mem, times));
    }
    let mut edges = Vec::new();
    for j in 2..=n {
        for i in 1..j {
            if rng.gen_bool(edge_prob) {
                edges.push(FlowEdge {
                    src: i as NodeId,
                    dst: j as NodeId,
                    payload_bytes: rng.gen_range(0..=8) * 1_000_000,
                });
            }
        }
    }
    CompGraph::new(nodes, edges).unwrap()
}

/// Heterogeneous cluster: every ordered pair linked with its own bandwidth.
/// `tightness` in `(0, 1]` scales device memory down from "everything fits
/// anywhere" towards "barely fits overall".
pub fn random_cluster(rng: &mut ChaCha8Rng, k: usize, total_mem: u64, tightness: f64) -> Cluster {
    let per = ((total_mem as f64 / k as f64) * (1.0 + (k as f64 - 1.0) * (1.0 - tightness))).ceil()
        as u64;
    let devices: Vec<Device> = (1..=k as DeviceId)
        .map(|id| Device {
            id,
            mem_bytes: per.max(100) + 10,
        })
        .collect();
    let mut links = Vec::new();
    for a in 1..=k as DeviceId {
        for b in 1..=k as DeviceId {
            if a != b {
                links.push(Link {
                    src: a,
                    dst: b,
                    bandwidth_bps: rng.gen_range(1..=8) as f64 * 1e6,
                });
            }
        }
    }
    Cluster::new(devices, links).unwrap()
}

pub fn problem(g: &CompGraph, c: &Cluster) -> Problem {
    Problem::new(g, c, &effective_bandwidth(c).unwrap()).unwrap()
}

/// Seeded small instance: 3..=8 ops, 2..=3 devices, mixed memory pressure.
pub fn small_instance(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=8);
    let k = rng.gen_range(2..=3);
    let devices: Vec<DeviceId> = (1..=k as DeviceId).collect();
    let g = random_graph(&mut rng, n, 0.4, &devices);
    let total: u64 = g.nodes().iter().map(|n| n.mem_bytes).sum();
    let tightness = [0.0, 0.5, 1.0][(seed % 3) as usize];
    let c = random_cluster(&mut rng, k, total, tightness);
    problem(&g, &c)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The worked fusion example: a residual block whose main path is
/// add/relu pairs and whose side path is two conv/bn pairs.
pub fn residual_block() -> CompGraph {
    let types = [
        "add", "relu", "add", "relu", "add", "relu", "conv", "bn", "conv", "bn",
    ];
    let nodes = types
        .iter()
        .enumerate()
        .map(|(i, &t)| OpNode::new(i as NodeId + 1, t, 10, [(1, 1.0), (2, 2.0)]))
        .collect();
    let pairs = [
        (1, 2),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 6),
        (1, 7),
        (7, 8),
        (8, 9),
        (9, 10),
        (10, 5),
    ];
    let edges = pairs
        .iter()
        .map(|&(s, d)| FlowEdge {
            src: s,
            dst: d,
            payload_bytes: 1000,
        })
        .collect();
    CompGraph::new(nodes, edges).unwrap()
}
