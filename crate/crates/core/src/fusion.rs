//! Fusion-rule driven graph coarsening.
//!
//! A rule is an ordered list of operator types that a backend executes as a
//! single kernel. Coarsening walks the graph depth first from every source,
//! fusing an edge when the concatenated type sequence completes a rule and
//! binding it (a tentative fusion) when the sequence is a strict sub-sequence
//! of a longer rule. Bound nodes that never complete are released at the end:
//! a bound node whose sequence is itself a rule becomes fused, otherwise it
//! splits back into the parts it was bound from.
//!
//! Only edges whose producer has a single consumer (direct or multi-input
//! connections) are eligible.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    validate_dag, CompGraph, DeviceId, FlowEdge, GraphError, NodeId, NodeTag, OpNode, FUSE_SEP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("rule {0} has fewer than two operator types")]
    TooShort(u32),
    #[error("rule {0} contains an empty operator type")]
    EmptyType(u32),
    #[error("duplicate rule id {0}")]
    DuplicateId(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionRule {
    pub id: u32,
    pub pattern: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleFile", into = "RuleFile")]
pub struct FusionRuleSet {
    rules: Vec<FusionRule>,
    max_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleFile {
    rules: Vec<FusionRule>,
}

impl TryFrom<RuleFile> for FusionRuleSet {
    type Error = RuleError;
    fn try_from(f: RuleFile) -> Result<Self, RuleError> {
        FusionRuleSet::new(f.rules)
    }
}

impl From<FusionRuleSet> for RuleFile {
    fn from(s: FusionRuleSet) -> Self {
        RuleFile { rules: s.rules }
    }
}

impl FusionRuleSet {
    pub fn new(mut rules: Vec<FusionRule>) -> Result<Self, RuleError> {
        rules.sort_by_key(|r| r.id);
        for w in rules.windows(2) {
            if w[0].id == w[1].id {
                return Err(RuleError::DuplicateId(w[0].id));
            }
        }
        for r in &rules {
            if r.pattern.len() < 2 {
                return Err(RuleError::TooShort(r.id));
            }
            if r.pattern
                .iter()
                .any(|t| t.is_empty() || t.contains(FUSE_SEP))
            {
                return Err(RuleError::EmptyType(r.id));
            }
        }
        let max_len = rules.iter().map(|r| r.pattern.len()).max().unwrap_or(0);
        Ok(FusionRuleSet { rules, max_len })
    }

    /// conv∘bn, conv∘bn∘relu and conv∘bn∘add∘relu, ids 1..=3.
    pub fn conv_bn_family() -> Self {
        let mk = |id, p: &[&str]| FusionRule {
            id,
            pattern: p.iter().map(|s| s.to_string()).collect(),
        };
        FusionRuleSet::new(vec![
            mk(1, &["conv", "bn"]),
            mk(2, &["conv", "bn", "relu"]),
            mk(3, &["conv", "bn", "add", "relu"]),
        ])
        .expect("static rules are well formed")
    }

    pub fn rules(&self) -> &[FusionRule] {
        &self.rules
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Classifies a type sequence against the rules. A strict contiguous
    /// sub-sequence of some rule is `Partial` (lowest such rule id) and takes
    /// priority; an exact match is `Full`.
    pub fn match_seq<S: AsRef<str>>(&self, seq: &[S]) -> RuleMatch {
        if seq.len() > self.max_len {
            return RuleMatch::None;
        }
        let eq = |w: &[String]| w.iter().zip(seq).all(|(a, b)| a == b.as_ref());
        if let Some(r) = self
            .rules
            .iter()
            .find(|r| r.pattern.len() > seq.len() && r.pattern.windows(seq.len()).any(eq))
        {
            return RuleMatch::Partial(r.id);
        }
        self.full_rule(seq).map_or(RuleMatch::None, RuleMatch::Full)
    }

    /// Rule whose pattern equals `seq` exactly (lowest id).
    pub fn full_rule<S: AsRef<str>>(&self, seq: &[S]) -> Option<u32> {
        self.rules
            .iter()
            .find(|r| {
                r.pattern.len() == seq.len()
                    && r.pattern.iter().zip(seq).all(|(a, b)| a == b.as_ref())
            })
            .map(|r| r.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleMatch {
    Full(u32),
    Partial(u32),
    None,
}

pub fn match_rule(pred: &OpNode, succ: &OpNode, rules: &FusionRuleSet) -> RuleMatch {
    let mut seq = pred.type_seq();
    seq.extend(succ.type_seq());
    rules.match_seq(&seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnKind {
    Direct,
    MultiOutputs,
    MultiInputs,
}

pub fn classify_connection(
    g: &CompGraph,
    src: NodeId,
    dst: NodeId,
) -> Result<ConnKind, GraphError> {
    if g.edge(src, dst).is_none() {
        return Err(GraphError::UnknownEdge { src, dst });
    }
    let out = g.out_degree(src).expect("edge exists");
    let inn = g.in_degree(dst).expect("edge exists");
    Ok(conn_kind(out, inn))
}

fn conn_kind(out_degree: usize, in_degree: usize) -> ConnKind {
    if out_degree > 1 {
        ConnKind::MultiOutputs
    } else if in_degree > 1 {
        ConnKind::MultiInputs
    } else {
        ConnKind::Direct
    }
}

pub fn is_valid_conn(g: &CompGraph, src: NodeId, dst: NodeId) -> Result<bool, GraphError> {
    classify_connection(g, src, dst).map(|k| k != ConnKind::MultiOutputs)
}

/// Contracts the edge `pred -> succ` into one node tagged `fused`.
///
/// Returns the new graph and the id of the merged node (the smallest member
/// id). Fails with `CycleCreation` when another path `pred ⇝ succ` exists.
pub fn fuse(g: &CompGraph, pred: NodeId, succ: NodeId) -> Result<(CompGraph, NodeId), GraphError> {
    if g.edge(pred, succ).is_none() {
        return Err(GraphError::UnknownEdge {
            src: pred,
            dst: succ,
        });
    }
    let p = g.index_of(pred).expect("edge exists");
    let s = g.index_of(succ).expect("edge exists");
    let mut work = Work::new(g);
    if work.has_alternate_path(p, s) {
        return Err(GraphError::CycleCreation { pred, succ });
    }
    let key = work.merge(p, s, NodeTag::Fused);
    let id = work.groups[&key].node.id;
    Ok((work.into_graph(), id))
}

/// Coarsens `g` under `rules`. The result contains no bound nodes, and every
/// multi-member node's type sequence equals a rule pattern.
///
/// Single passes repeat until one no longer reduces the node count, which
/// makes the operation idempotent.
pub fn gcof(g: &CompGraph, rules: &FusionRuleSet) -> Result<CompGraph, GraphError> {
    validate_dag(g)?;
    let mut cur = g.clone();
    loop {
        let next = gcof_pass(&cur, rules);
        if next.len() < cur.len() {
            cur = next;
        } else {
            return Ok(cur);
        }
    }
}

fn gcof_pass(g: &CompGraph, rules: &FusionRuleSet) -> CompGraph {
    let mut work = Work::new(g);
    let mut visited: HashSet<usize> = HashSet::new();
    let mut stack: Vec<usize> = (0..g.len())
        .rev()
        .filter(|&i| g.in_edges(i).is_empty())
        .collect();
    while let Some(atom) = stack.pop() {
        let mut cur = work.owner[atom];
        if visited.contains(&cur) {
            continue;
        }
        loop {
            let succs = work.successors(cur);
            let mut merged = None;
            for &s in &succs {
                let mut seq = work.groups[&cur].node.type_seq();
                seq.extend(work.groups[&s].node.type_seq());
                let tag = match rules.match_seq(&seq) {
                    RuleMatch::Full(_) => NodeTag::Fused,
                    RuleMatch::Partial(_) => NodeTag::Bound,
                    RuleMatch::None => continue,
                };
                // out-degree 1 rules out both multi-output edges and
                // alternate paths; the explicit check stays for clarity
                if succs.len() == 1 && !work.has_alternate_path(cur, s) {
                    merged = Some((s, tag));
                    break;
                }
            }
            match merged {
                Some((s, tag)) => {
                    visited.remove(&s);
                    cur = work.merge(cur, s, tag);
                }
                None => break,
            }
        }
        visited.insert(cur);
        for s in work.successors(cur).into_iter().rev() {
            if !visited.contains(&s) {
                stack.push(s);
            }
        }
    }
    work.unbind(rules);
    work.into_graph()
}

#[derive(Debug, Clone)]
struct Group {
    node: OpNode,
    /// Input-graph indices covered by this group, in member order.
    atoms: Vec<usize>,
    /// The two groups a bound group was formed from.
    parts: Option<Box<(Group, Group)>>,
}

/// Mutable partition of an input graph's nodes into groups. Groups are keyed
/// by their smallest input index.
struct Work<'g> {
    g: &'g CompGraph,
    owner: Vec<usize>,
    groups: BTreeMap<usize, Group>,
}

impl<'g> Work<'g> {
    fn new(g: &'g CompGraph) -> Self {
        let groups = g
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| {
                (
                    i,
                    Group {
                        node: n.clone(),
                        atoms: vec![i],
                        parts: None,
                    },
                )
            })
            .collect();
        Work {
            g,
            owner: (0..g.len()).collect(),
            groups,
        }
    }

    fn successors(&self, key: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.groups[&key]
            .atoms
            .iter()
            .flat_map(|&a| self.g.succ_indices(a))
            .map(|b| self.owner[b])
            .filter(|&k| k != key)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Whether `to` is reachable from `from` without using a direct edge.
    fn has_alternate_path(&self, from: usize, to: usize) -> bool {
        let mut seen = HashSet::new();
        let mut stack: Vec<usize> = self
            .successors(from)
            .into_iter()
            .filter(|&k| k != to)
            .collect();
        while let Some(k) = stack.pop() {
            if k == to {
                return true;
            }
            if seen.insert(k) {
                stack.extend(self.successors(k));
            }
        }
        false
    }

    fn merge(&mut self, pred: usize, succ: usize, tag: NodeTag) -> usize {
        let a = self.groups.remove(&pred).expect("live group");
        let b = self.groups.remove(&succ).expect("live group");
        let key = pred.min(succ);
        let mut atoms = a.atoms.clone();
        atoms.extend(&b.atoms);
        for &x in &atoms {
            self.owner[x] = key;
        }
        let mut members = a.node.members.clone();
        members.extend(&b.node.members);
        let compute_time: BTreeMap<DeviceId, f64> = a
            .node
            .compute_time
            .iter()
            .filter_map(|(k, ta)| b.node.compute_time.get(k).map(|tb| (*k, ta + tb)))
            .collect();
        let node = OpNode {
            id: *members.iter().min().expect("non-empty"),
            op_type: format!("{}{}{}", a.node.op_type, FUSE_SEP, b.node.op_type),
            mem_bytes: a.node.mem_bytes + b.node.mem_bytes,
            compute_time,
            members,
            tag,
        };
        let parts = (tag == NodeTag::Bound).then(|| Box::new((a, b)));
        self.groups.insert(key, Group { node, atoms, parts });
        key
    }

    fn unbind(&mut self, rules: &FusionRuleSet) {
        let bound: Vec<usize> = self
            .groups
            .iter()
            .filter(|(_, gr)| gr.node.tag == NodeTag::Bound)
            .map(|(&k, _)| k)
            .collect();
        for key in bound {
            let gr = self.groups.remove(&key).expect("live group");
            let mut released = Vec::new();
            release(gr, rules, &mut released);
            for part in released {
                let k = *part.atoms.iter().min().expect("non-empty");
                for &x in &part.atoms {
                    self.owner[x] = k;
                }
                self.groups.insert(k, part);
            }
        }
    }

    fn into_graph(self) -> CompGraph {
        let ids: HashMap<usize, NodeId> =
            self.groups.iter().map(|(&k, gr)| (k, gr.node.id)).collect();
        let mut order: Vec<(NodeId, NodeId)> = Vec::new();
        let mut payload: HashMap<(NodeId, NodeId), u64> = HashMap::new();
        for e in self.g.edges() {
            let s = self.owner[self.g.index_of(e.src).expect("valid")];
            let d = self.owner[self.g.index_of(e.dst).expect("valid")];
            if s == d {
                continue;
            }
            let key = (ids[&s], ids[&d]);
            *payload.entry(key).or_insert_with(|| {
                order.push(key);
                0
            }) += e.payload_bytes;
        }
        let edges = order
            .into_iter()
            .map(|(src, dst)| FlowEdge {
                src,
                dst,
                payload_bytes: payload[&(src, dst)],
            })
            .collect();
        let nodes = self.groups.into_values().map(|gr| gr.node).collect();
        CompGraph::new(nodes, edges).expect("quotient of a valid graph is valid")
    }
}

fn release(gr: Group, rules: &FusionRuleSet, out: &mut Vec<Group>) {
    if gr.node.tag != NodeTag::Bound {
        out.push(gr);
        return;
    }
    if rules.full_rule(&gr.node.type_seq()).is_some() {
        out.push(Group {
            node: OpNode {
                tag: NodeTag::Fused,
                ..gr.node
            },
            atoms: gr.atoms,
            parts: None,
        });
        return;
    }
    let (a, b) = *gr.parts.expect("bound groups record their parts");
    release(a, rules, out);
    release(b, rules, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(id: NodeId, ty: &str, t: f64) -> OpNode {
        OpNode::new(id, ty, 10, [(1, t)])
    }

    fn graph(types: &[&str], edges: &[(u32, u32)]) -> CompGraph {
        let nodes = types
            .iter()
            .enumerate()
            .map(|(i, t)| op(i as u32 + 1, t, 1.0))
            .collect();
        let edges = edges
            .iter()
            .map(|&(src, dst)| FlowEdge {
                src,
                dst,
                payload_bytes: 4,
            })
            .collect();
        CompGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn rule_matching() {
        let r = FusionRuleSet::conv_bn_family();
        assert_eq!(
            match_rule(&op(1, "conv", 1.0), &op(2, "bn", 1.0), &r),
            RuleMatch::Partial(2)
        );
        assert_eq!(
            match_rule(&op(1, "relu", 1.0), &op(2, "relu", 1.0), &r),
            RuleMatch::None
        );
        let mut cb = op(1, "conv∘bn", 1.0);
        cb.members = vec![1, 2];
        cb.tag = NodeTag::Bound;
        assert_eq!(match_rule(&cb, &op(3, "relu", 1.0), &r), RuleMatch::Full(2));
        assert_eq!(r.match_seq(&["add", "relu"]), RuleMatch::Partial(3));
    }

    #[test]
    fn bad_rules() {
        let r = |id, p: &[&str]| FusionRule {
            id,
            pattern: p.iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(
            FusionRuleSet::new(vec![r(1, &["conv"])]),
            Err(RuleError::TooShort(1))
        );
        assert_eq!(
            FusionRuleSet::new(vec![r(1, &["a", "b"]), r(1, &["c", "d"])]),
            Err(RuleError::DuplicateId(1))
        );
        assert_eq!(
            FusionRuleSet::new(vec![r(4, &["a", ""])]),
            Err(RuleError::EmptyType(4))
        );
    }

    #[test]
    fn connection_kinds() {
        let g = graph(&["a", "b"], &[(1, 2)]);
        assert_eq!(classify_connection(&g, 1, 2), Ok(ConnKind::Direct));
        let g = graph(&["x", "y", "z"], &[(1, 3), (2, 3)]);
        assert_eq!(classify_connection(&g, 1, 3), Ok(ConnKind::MultiInputs));
        assert_eq!(is_valid_conn(&g, 1, 3), Ok(true));
        let g = graph(&["a", "b", "c"], &[(1, 2), (1, 3)]);
        assert_eq!(classify_connection(&g, 1, 2), Ok(ConnKind::MultiOutputs));
        assert_eq!(is_valid_conn(&g, 1, 2), Ok(false));
        assert_eq!(
            classify_connection(&g, 2, 3),
            Err(GraphError::UnknownEdge { src: 2, dst: 3 })
        );
    }

    #[test]
    fn fuse_sums_times() {
        let nodes = vec![op(1, "a", 2.0), op(2, "b", 3.0)];
        let g = CompGraph::new(
            nodes,
            vec![FlowEdge {
                src: 1,
                dst: 2,
                payload_bytes: 1,
            }],
        )
        .unwrap();
        let (h, id) = fuse(&g, 1, 2).unwrap();
        assert_eq!(h.len(), 1);
        let n = h.node(id).unwrap();
        assert_eq!(n.compute_time[&1], 5.0);
        assert_eq!(n.op_type, "a∘b");
        assert_eq!(n.members, vec![1, 2]);
        assert_eq!(n.mem_bytes, 20);
        assert_eq!(n.tag, NodeTag::Fused);
    }

    #[test]
    fn fuse_rejects_shortcut() {
        // 1->2 and 1->3->2
        let g = graph(&["a", "b", "c"], &[(1, 2), (1, 3), (3, 2)]);
        assert_eq!(
            fuse(&g, 1, 2),
            Err(GraphError::CycleCreation { pred: 1, succ: 2 })
        );
        assert_eq!(
            fuse(&g, 2, 1),
            Err(GraphError::UnknownEdge { src: 2, dst: 1 })
        );
    }

    #[test]
    fn chain_trace() {
        let g = graph(
            &["conv", "bn", "relu", "conv", "bn"],
            &[(1, 2), (2, 3), (3, 4), (4, 5)],
        );
        let out = gcof(&g, &FusionRuleSet::conv_bn_family()).unwrap();
        let types: Vec<_> = out.nodes().iter().map(|n| n.op_type.as_str()).collect();
        assert_eq!(types, vec!["conv∘bn∘relu", "conv∘bn"]);
        assert!(out.nodes().iter().all(|n| n.tag == NodeTag::Fused));
        assert_eq!(
            out.edges(),
            &[FlowEdge {
                src: 1,
                dst: 4,
                payload_bytes: 4
            }]
        );
    }

    #[test]
    fn no_match_is_identity() {
        let g = graph(&["matmul", "softmax", "matmul"], &[(1, 2), (2, 3)]);
        assert_eq!(gcof(&g, &FusionRuleSet::conv_bn_family()).unwrap(), g);
    }

    #[test]
    fn partial_remnant_splits_at_rule_boundary() {
        // conv->bn->add, add has no relu after it: conv∘bn stays, add released
        let g = graph(&["conv", "bn", "add"], &[(1, 2), (2, 3)]);
        let out = gcof(&g, &FusionRuleSet::conv_bn_family()).unwrap();
        let types: Vec<_> = out
            .nodes()
            .iter()
            .map(|n| (n.op_type.as_str(), n.tag))
            .collect();
        assert_eq!(
            types,
            vec![("conv∘bn", NodeTag::Fused), ("add", NodeTag::Plain)]
        );
    }
}
