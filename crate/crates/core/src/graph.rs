//! Operator DAG data model.
//!
//! A [`CompGraph`] holds operators (nodes) and the data flows between them
//! (edges). Nodes are stored sorted by id and all algorithms break ties by
//! ascending id, so every derived order is reproducible.
//!
//! [`AugGraph`] is the flow-node form of a graph: every edge `(i, j)` becomes
//! its own node `q` with unweighted links `(i, q)` and `(q, j)`, which lets
//! transfers carry start and completion times exactly like operators.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;
pub type DeviceId = u32;

/// Separator joining member operator types of a fused node.
pub const FUSE_SEP: char = '∘';

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph contains a cycle: {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("edge {src}->{dst} references an unknown node")]
    DanglingEdge { src: NodeId, dst: NodeId },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate edge {src}->{dst}")]
    DuplicateEdge { src: NodeId, dst: NodeId },
    #[error("self loop on node {0}")]
    SelfLoop(NodeId),
    #[error("node {0} has an empty or duplicated member list")]
    BadMembers(NodeId),
    #[error("node {0} has an empty operator type")]
    EmptyType(NodeId),
    #[error("negative or non-finite compute time on node {0}")]
    BadTime(NodeId),
    #[error("unknown edge {src}->{dst}")]
    UnknownEdge { src: NodeId, dst: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("fusing {pred} and {succ} would create a cycle")]
    CycleCreation { pred: NodeId, succ: NodeId },
    #[error("unsupported graph schema version {0}")]
    Schema(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NodeTag {
    #[default]
    Plain,
    Fused,
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: NodeId,
    pub op_type: String,
    pub mem_bytes: u64,
    /// Seconds per device.
    pub compute_time: BTreeMap<DeviceId, f64>,
    /// Original operator ids folded into this node, in fusion order.
    #[serde(default)]
    pub members: Vec<NodeId>,
    #[serde(default)]
    pub tag: NodeTag,
}

impl OpNode {
    /// A plain (unfused) operator.
    pub fn new(
        id: NodeId,
        op_type: impl Into<String>,
        mem_bytes: u64,
        compute_time: impl IntoIterator<Item = (DeviceId, f64)>,
    ) -> Self {
        OpNode {
            id,
            op_type: op_type.into(),
            mem_bytes,
            compute_time: compute_time.into_iter().collect(),
            members: vec![id],
            tag: NodeTag::Plain,
        }
    }

    /// Member operator types in order; a plain node yields its own type.
    pub fn type_seq(&self) -> Vec<&str> {
        self.op_type.split(FUSE_SEP).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_bytes: u64,
}

/// Weighted operator DAG. Structural invariants (unique ids, resolvable
/// endpoints, no self loops or parallel edges) are enforced at construction;
/// acyclicity is checked by [`validate_dag`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompGraph {
    nodes: Vec<OpNode>,
    edges: Vec<FlowEdge>,
    index: HashMap<NodeId, usize>,
    // (neighbour index, edge index), sorted by neighbour index
    succ: Vec<Vec<(usize, usize)>>,
    pred: Vec<Vec<(usize, usize)>>,
}

impl CompGraph {
    pub fn new(mut nodes: Vec<OpNode>, edges: Vec<FlowEdge>) -> Result<Self, GraphError> {
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter_mut().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(GraphError::DuplicateNode(n.id));
            }
            if n.op_type.is_empty() || n.type_seq().iter().any(|t| t.is_empty()) {
                return Err(GraphError::EmptyType(n.id));
            }
            if n.members.is_empty() {
                n.members.push(n.id);
            }
            let uniq: HashSet<_> = n.members.iter().collect();
            if uniq.len() != n.members.len() {
                return Err(GraphError::BadMembers(n.id));
            }
            if n.compute_time.values().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(GraphError::BadTime(n.id));
            }
        }
        let mut succ = vec![Vec::new(); nodes.len()];
        let mut pred = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::with_capacity(edges.len());
        for (e, edge) in edges.iter().enumerate() {
            let (Some(&s), Some(&d)) = (index.get(&edge.src), index.get(&edge.dst)) else {
                return Err(GraphError::DanglingEdge {
                    src: edge.src,
                    dst: edge.dst,
                });
            };
            if s == d {
                return Err(GraphError::SelfLoop(edge.src));
            }
            if !seen.insert((s, d)) {
                return Err(GraphError::DuplicateEdge {
                    src: edge.src,
                    dst: edge.dst,
                });
            }
            succ[s].push((d, e));
            pred[d].push((s, e));
        }
        for list in succ.iter_mut().chain(pred.iter_mut()) {
            list.sort_unstable();
        }
        Ok(CompGraph {
            nodes,
            edges,
            index,
            succ,
            pred,
        })
    }

    pub fn nodes(&self) -> &[OpNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&OpNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    /// Successor node indices of node index `i`, ascending.
    pub fn succ_indices(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.succ[i].iter().map(|&(j, _)| j)
    }

    pub fn pred_indices(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.pred[i].iter().map(|&(j, _)| j)
    }

    /// `(neighbour index, edge index)` pairs for outgoing edges.
    pub fn out_edges(&self, i: usize) -> &[(usize, usize)] {
        &self.succ[i]
    }

    pub fn in_edges(&self, i: usize) -> &[(usize, usize)] {
        &self.pred[i]
    }

    pub fn out_degree(&self, id: NodeId) -> Option<usize> {
        self.index_of(id).map(|i| self.succ[i].len())
    }

    pub fn in_degree(&self, id: NodeId) -> Option<usize> {
        self.index_of(id).map(|i| self.pred[i].len())
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<&FlowEdge> {
        let s = self.index_of(src)?;
        let d = self.index_of(dst)?;
        self.succ[s]
            .iter()
            .find(|&&(j, _)| j == d)
            .map(|&(_, e)| &self.edges[e])
    }

    /// True when the undirected skeleton has a single component.
    pub fn is_weakly_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in self.succ_indices(i).chain(self.pred_indices(i)) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.nodes.len()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.nodes.len())
            .map(|i| self.succ_indices(i).collect())
            .collect()
    }
}

/// Checks that the graph has no directed cycle. On failure the error carries
/// one witness cycle, listed in traversal order.
pub fn validate_dag(g: &CompGraph) -> Result<(), GraphError> {
    let ids: Vec<NodeId> = g.nodes.iter().map(|n| n.id).collect();
    match find_cycle(&g.adjacency()) {
        Some(cycle) => Err(GraphError::Cycle(
            cycle.into_iter().map(|i| ids[i]).collect(),
        )),
        None => {
            if !g.is_weakly_connected() {
                log::warn!("graph is not weakly connected ({} nodes)", g.len());
            }
            Ok(())
        }
    }
}

fn find_cycle(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }
    let n = adj.len();
    let mut color = vec![Color::White; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if color[root] != Color::White {
            continue;
        }
        // iterative DFS: (node, next child position)
        let mut stack = vec![(root, 0usize)];
        color[root] = Color::Grey;
        while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                match color[w] {
                    Color::White => {
                        color[w] = Color::Grey;
                        parent[w] = v;
                        stack.push((w, 0));
                    }
                    Color::Grey => {
                        let mut cycle = vec![v];
                        let mut cur = v;
                        while cur != w {
                            cur = parent[cur];
                            cycle.push(cur);
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    Color::Black => {}
                }
            } else {
                color[v] = Color::Black;
                stack.pop();
            }
        }
    }
    None
}

/// Kahn's algorithm over index adjacency, smallest index first.
fn topo_indices(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut indeg = vec![0usize; n];
    for succs in adj {
        for &j in succs {
            indeg[j] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = heap.pop() {
        order.push(i);
        for &j in &adj[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                heap.push(Reverse(j));
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Deterministic topological order, ties broken by ascending node id.
pub fn topo_order(g: &CompGraph) -> Result<Vec<NodeId>, GraphError> {
    topo_order_indices(g).map(|o| o.into_iter().map(|i| g.nodes[i].id).collect())
}

/// Same as [`topo_order`] but yields node indices.
pub fn topo_order_indices(g: &CompGraph) -> Result<Vec<usize>, GraphError> {
    let adj = g.adjacency();
    match topo_indices(&adj) {
        Some(o) => Ok(o),
        None => {
            let ids: Vec<NodeId> = g.nodes.iter().map(|n| n.id).collect();
            let cycle = find_cycle(&adj).unwrap_or_default();
            Err(GraphError::Cycle(
                cycle.into_iter().map(|i| ids[i]).collect(),
            ))
        }
    }
}

/// Strict-descendant sets for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccClosure {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    rows: Vec<FixedBitSet>,
}

impl SuccClosure {
    fn from_adjacency(ids: Vec<NodeId>, adj: &[Vec<usize>]) -> Result<Self, GraphError> {
        let Some(order) = topo_indices(adj) else {
            let cycle = find_cycle(adj).unwrap_or_default();
            return Err(GraphError::Cycle(
                cycle.into_iter().map(|i| ids[i]).collect(),
            ));
        };
        let n = ids.len();
        let mut rows = vec![FixedBitSet::with_capacity(n); n];
        for &v in order.iter().rev() {
            let mut row = FixedBitSet::with_capacity(n);
            for &w in &adj[v] {
                row.insert(w);
                row.union_with(&rows[w]);
            }
            rows[v] = row;
        }
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(SuccClosure { ids, index, rows })
    }

    /// True when a directed path `from ⇝ to` exists.
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        match (self.index.get(&from), self.index.get(&to)) {
            (Some(&f), Some(&t)) => self.rows[f].contains(t),
            _ => false,
        }
    }

    /// Index-based variant of [`SuccClosure::reaches`].
    pub fn reaches_idx(&self, from: usize, to: usize) -> bool {
        self.rows[from].contains(to)
    }

    /// Neither node reaches the other.
    pub fn unrelated_idx(&self, a: usize, b: usize) -> bool {
        a != b && !self.rows[a].contains(b) && !self.rows[b].contains(a)
    }

    pub fn successors(&self, id: NodeId) -> Vec<NodeId> {
        self.index
            .get(&id)
            .map(|&i| self.rows[i].ones().map(|j| self.ids[j]).collect())
            .unwrap_or_default()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

/// Anything whose successor closure can be computed.
pub trait Dag {
    fn node_ids(&self) -> Vec<NodeId>;
    fn index_adjacency(&self) -> Vec<Vec<usize>>;
}

impl Dag for CompGraph {
    fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| n.id).collect()
    }
    fn index_adjacency(&self) -> Vec<Vec<usize>> {
        self.adjacency()
    }
}

pub fn succ_closure<G: Dag + ?Sized>(g: &G) -> Result<SuccClosure, GraphError> {
    SuccClosure::from_adjacency(g.node_ids(), &g.index_adjacency())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: NodeId,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_bytes: u64,
}

/// Flow-node form of a [`CompGraph`].
///
/// Node indices: op nodes first in ascending id order, then flow nodes in
/// input edge order. Flow ids start right after the largest op id, so a graph
/// with ops `1..=α` gets flows `α+1..=α+β`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugGraph {
    pub op_nodes: Vec<OpNode>,
    pub flow_nodes: Vec<FlowNode>,
    pub links: Vec<(NodeId, NodeId)>,
}

impl AugGraph {
    pub fn n_total(&self) -> usize {
        self.op_nodes.len() + self.flow_nodes.len()
    }

    /// Index of any node id (op or flow).
    pub fn index_map(&self) -> HashMap<NodeId, usize> {
        self.op_nodes
            .iter()
            .map(|n| n.id)
            .chain(self.flow_nodes.iter().map(|f| f.id))
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect()
    }

    /// Collapse every flow node back into a plain edge.
    pub fn contract(&self) -> Result<CompGraph, GraphError> {
        let edges = self
            .flow_nodes
            .iter()
            .map(|f| FlowEdge {
                src: f.src,
                dst: f.dst,
                payload_bytes: f.payload_bytes,
            })
            .collect();
        CompGraph::new(self.op_nodes.clone(), edges)
    }
}

impl Dag for AugGraph {
    fn node_ids(&self) -> Vec<NodeId> {
        self.op_nodes
            .iter()
            .map(|n| n.id)
            .chain(self.flow_nodes.iter().map(|f| f.id))
            .collect()
    }
    fn index_adjacency(&self) -> Vec<Vec<usize>> {
        let index = self.index_map();
        let mut adj = vec![Vec::new(); self.n_total()];
        for &(a, b) in &self.links {
            adj[index[&a]].push(index[&b]);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }
}

pub fn augment(g: &CompGraph) -> Result<AugGraph, GraphError> {
    validate_dag(g)?;
    let base = g.nodes.iter().map(|n| n.id).max().unwrap_or(0);
    let mut flow_nodes = Vec::with_capacity(g.edges.len());
    let mut links = Vec::with_capacity(2 * g.edges.len());
    for (e, edge) in g.edges.iter().enumerate() {
        let id = base + 1 + e as NodeId;
        flow_nodes.push(FlowNode {
            id,
            src: edge.src,
            dst: edge.dst,
            payload_bytes: edge.payload_bytes,
        });
        links.push((edge.src, id));
        links.push((id, edge.dst));
    }
    Ok(AugGraph {
        op_nodes: g.nodes.clone(),
        flow_nodes,
        links,
    })
}

// ---------------------------------------------------------------------------
// JSON interchange

pub const GRAPH_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub nodes: Vec<OpNode>,
    pub edges: Vec<FlowEdge>,
}

fn default_schema() -> u32 {
    GRAPH_SCHEMA
}

impl GraphFile {
    pub fn into_graph(self) -> Result<CompGraph, GraphError> {
        if self.schema != GRAPH_SCHEMA {
            return Err(GraphError::Schema(self.schema));
        }
        CompGraph::new(self.nodes, self.edges)
    }
}

impl From<&CompGraph> for GraphFile {
    fn from(g: &CompGraph) -> Self {
        GraphFile {
            schema: GRAPH_SCHEMA,
            nodes: g.nodes.clone(),
            edges: g.edges.clone(),
        }
    }
}
