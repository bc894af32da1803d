//! Dense, index-based view of one placement instance.
//!
//! Operators are indexed in ascending id order, devices in ascending id
//! order, and flows in input edge order. Everything downstream (MILP,
//! scheduler, simulator) works on these indices.

use crate::error::ModelError;
use crate::graph::{
    augment, succ_closure, topo_order_indices, validate_dag, AugGraph, CompGraph, DeviceId, NodeId,
    SuccClosure,
};
use crate::profiles::{comm_time, Cluster, EffectiveMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flow {
    /// Flow-node id in the augmented graph.
    pub id: NodeId,
    pub src: usize,
    pub dst: usize,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub graph: CompGraph,
    pub aug: AugGraph,
    pub op_ids: Vec<NodeId>,
    pub device_ids: Vec<DeviceId>,
    pub op_mem: Vec<u64>,
    pub dev_mem: Vec<u64>,
    op_time: Vec<f64>,
    pub flows: Vec<Flow>,
    comm: Vec<f64>,
    pub flows_out: Vec<Vec<usize>>,
    pub flows_in: Vec<Vec<usize>>,
    /// Operator indices in deterministic topological order.
    pub topo: Vec<usize>,
    pub op_closure: SuccClosure,
    /// Closure over the augmented graph (ops then flows).
    pub aug_closure: SuccClosure,
}

impl Problem {
    pub fn new(g: &CompGraph, cluster: &Cluster, mesh: &EffectiveMesh) -> Result<Self, ModelError> {
        validate_dag(g)?;
        cluster.validate()?;
        if g.is_empty() {
            return Err(ModelError::EmptyGraph);
        }
        let device_ids: Vec<DeviceId> = cluster.devices.iter().map(|d| d.id).collect();
        if mesh.device_ids() != device_ids.as_slice() {
            return Err(ModelError::MeshMismatch);
        }
        let k = device_ids.len();
        let mut op_time = Vec::with_capacity(g.len() * k);
        for n in g.nodes() {
            for &d in &device_ids {
                let t = n
                    .compute_time
                    .get(&d)
                    .copied()
                    .ok_or(ModelError::MissingCost {
                        op: n.id,
                        device: d,
                    })?;
                op_time.push(t);
            }
        }
        let aug = augment(g)?;
        let flows: Vec<Flow> = aug
            .flow_nodes
            .iter()
            .map(|f| Flow {
                id: f.id,
                src: g.index_of(f.src).expect("valid"),
                dst: g.index_of(f.dst).expect("valid"),
                payload_bytes: f.payload_bytes,
            })
            .collect();
        let mut comm = Vec::with_capacity(flows.len() * k * k);
        for f in &flows {
            for a in 0..k {
                for b in 0..k {
                    comm.push(comm_time(f.payload_bytes, a, b, mesh));
                }
            }
        }
        let mut flows_out = vec![Vec::new(); g.len()];
        let mut flows_in = vec![Vec::new(); g.len()];
        for (q, f) in flows.iter().enumerate() {
            flows_out[f.src].push(q);
            flows_in[f.dst].push(q);
        }
        Ok(Problem {
            op_ids: g.nodes().iter().map(|n| n.id).collect(),
            op_mem: g.nodes().iter().map(|n| n.mem_bytes).collect(),
            dev_mem: cluster.devices.iter().map(|d| d.mem_bytes).collect(),
            topo: topo_order_indices(g)?,
            op_closure: succ_closure(g)?,
            aug_closure: succ_closure(&aug)?,
            graph: g.clone(),
            aug,
            device_ids,
            op_time,
            flows,
            comm,
            flows_out,
            flows_in,
        })
    }

    pub fn n_ops(&self) -> usize {
        self.op_ids.len()
    }

    pub fn n_devices(&self) -> usize {
        self.device_ids.len()
    }

    pub fn n_flows(&self) -> usize {
        self.flows.len()
    }

    /// Processing time of op `i` on device index `k`.
    pub fn op_time(&self, i: usize, k: usize) -> f64 {
        self.op_time[i * self.device_ids.len() + k]
    }

    pub fn min_op_time(&self, i: usize) -> f64 {
        (0..self.n_devices())
            .map(|k| self.op_time(i, k))
            .fold(f64::INFINITY, f64::min)
    }

    /// Transfer time of flow `q` from device index `a` to `b` (0 when equal).
    pub fn comm(&self, q: usize, a: usize, b: usize) -> f64 {
        let k = self.device_ids.len();
        self.comm[(q * k + a) * k + b]
    }

    pub fn max_comm(&self, q: usize) -> f64 {
        let k = self.n_devices();
        (0..k)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| self.comm(q, a, b))
            .fold(0.0, f64::max)
    }

    /// Rejects instances whose total footprint exceeds total cluster memory
    /// or with an operator that fits on no device.
    pub fn check_memory(&self) -> Result<(), ModelError> {
        let required: u64 = self.op_mem.iter().sum();
        let available: u64 = self.dev_mem.iter().sum();
        let largest_dev = self.dev_mem.iter().copied().max().unwrap_or(0);
        let largest_op = self.op_mem.iter().copied().max().unwrap_or(0);
        if required > available || largest_op > largest_dev {
            return Err(ModelError::InfeasibleMemory {
                required,
                available,
            });
        }
        Ok(())
    }

    /// Augmented-graph index of flow `q`.
    pub fn flow_aug_index(&self, q: usize) -> usize {
        self.n_ops() + q
    }

    pub fn device_index(&self, id: DeviceId) -> Option<usize> {
        self.device_ids.iter().position(|&d| d == id)
    }

    pub fn op_index(&self, id: NodeId) -> Option<usize> {
        self.graph.index_of(id)
    }
}
