//! Device clusters, effective bandwidth and cost lookups.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DeviceId, NodeId, OpNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("cluster has no devices")]
    NoDevices,
    #[error("duplicate device id {0}")]
    DuplicateDevice(DeviceId),
    #[error("device {0} has zero memory")]
    ZeroMemory(DeviceId),
    #[error("link {src}->{dst} is invalid (self link, unknown device or non-positive bandwidth)")]
    BadLink { src: DeviceId, dst: DeviceId },
    #[error("cluster is disconnected; unreachable pairs: {0:?}")]
    DisconnectedCluster(Vec<(DeviceId, DeviceId)>),
    #[error("no profiled time for member {member} on device {device}")]
    MissingProfile { member: NodeId, device: DeviceId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    pub mem_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: DeviceId,
    pub dst: DeviceId,
    #[serde(rename = "bandwidth_Bps")]
    pub bandwidth_bps: f64,
}

/// Devices plus their physical directed links. Device order is ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub devices: Vec<Device>,
    pub links: Vec<Link>,
}

impl Cluster {
    pub fn new(mut devices: Vec<Device>, links: Vec<Link>) -> Result<Self, ProfileError> {
        devices.sort_by_key(|d| d.id);
        let c = Cluster { devices, links };
        c.validate()?;
        Ok(c)
    }

    /// Every ordered pair gets a direct link of the same bandwidth.
    pub fn full_mesh(devices: Vec<Device>, bandwidth_bps: f64) -> Result<Self, ProfileError> {
        let mut links = Vec::new();
        for a in &devices {
            for b in &devices {
                if a.id != b.id {
                    links.push(Link {
                        src: a.id,
                        dst: b.id,
                        bandwidth_bps,
                    });
                }
            }
        }
        Cluster::new(devices, links)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.devices.is_empty() {
            return Err(ProfileError::NoDevices);
        }
        for w in self.devices.windows(2) {
            if w[0].id == w[1].id {
                return Err(ProfileError::DuplicateDevice(w[0].id));
            }
        }
        if let Some(d) = self.devices.iter().find(|d| d.mem_bytes == 0) {
            return Err(ProfileError::ZeroMemory(d.id));
        }
        for l in &self.links {
            let known = |id| self.devices.iter().any(|d| d.id == id);
            if l.src == l.dst
                || !known(l.src)
                || !known(l.dst)
                || !(l.bandwidth_bps > 0.0 && l.bandwidth_bps.is_finite())
            {
                return Err(ProfileError::BadLink {
                    src: l.src,
                    dst: l.dst,
                });
            }
        }
        Ok(())
    }

    pub fn device_index(&self, id: DeviceId) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }
}

/// Effective bandwidth for every ordered device pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMesh {
    ids: Vec<DeviceId>,
    bw: Vec<f64>,
}

impl EffectiveMesh {
    pub fn device_ids(&self) -> &[DeviceId] {
        &self.ids
    }

    /// Bandwidth between device indices; infinite on the diagonal.
    pub fn bw_idx(&self, from: usize, to: usize) -> f64 {
        self.bw[from * self.ids.len() + to]
    }

    pub fn bw(&self, from: DeviceId, to: DeviceId) -> Option<f64> {
        let f = self.ids.iter().position(|&d| d == from)?;
        let t = self.ids.iter().position(|&d| d == to)?;
        Some(self.bw_idx(f, t))
    }
}

#[derive(PartialEq)]
struct Widest(f64, usize);

impl Eq for Widest {}

impl PartialOrd for Widest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Widest {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Max-bottleneck bandwidth over all directed paths, per ordered pair.
///
/// Dijkstra-style sweep from every source where the label of a node is the
/// widest bottleneck found so far and labels are settled widest-first.
pub fn effective_bandwidth(c: &Cluster) -> Result<EffectiveMesh, ProfileError> {
    c.validate()?;
    let k = c.devices.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for l in &c.links {
        let s = c.device_index(l.src).expect("validated");
        let d = c.device_index(l.dst).expect("validated");
        adj[s].push((d, l.bandwidth_bps));
    }
    let mut bw = vec![0.0; k * k];
    let mut missing = Vec::new();
    for src in 0..k {
        let mut best = vec![0.0f64; k];
        let mut done = vec![false; k];
        best[src] = f64::INFINITY;
        let mut heap = BinaryHeap::from([Widest(f64::INFINITY, src)]);
        while let Some(Widest(w, v)) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            for &(u, b) in &adj[v] {
                let cand = w.min(b);
                if cand > best[u] {
                    best[u] = cand;
                    heap.push(Widest(cand, u));
                }
            }
        }
        for dst in 0..k {
            if dst != src && best[dst] <= 0.0 {
                missing.push((c.devices[src].id, c.devices[dst].id));
            }
            bw[src * k + dst] = best[dst];
        }
    }
    if !missing.is_empty() {
        return Err(ProfileError::DisconnectedCluster(missing));
    }
    Ok(EffectiveMesh {
        ids: c.devices.iter().map(|d| d.id).collect(),
        bw,
    })
}

/// Transfer time in seconds; zero when both ends are the same device.
pub fn comm_time(payload_bytes: u64, from: usize, to: usize, mesh: &EffectiveMesh) -> f64 {
    if from == to {
        0.0
    } else {
        payload_bytes as f64 / mesh.bw_idx(from, to)
    }
}

/// Measured times for fused operator sequences that replace the member sum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedCostTable {
    overrides: HashMap<(Vec<String>, DeviceId), f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostOverride {
    pub types: Vec<String>,
    pub device: DeviceId,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverrideFile {
    pub overrides: Vec<CostOverride>,
}

impl FusedCostTable {
    pub fn insert(&mut self, types: Vec<String>, device: DeviceId, seconds: f64) {
        self.overrides.insert((types, device), seconds);
    }

    pub fn get(&self, types: &[&str], device: DeviceId) -> Option<f64> {
        let key: Vec<String> = types.iter().map(|s| s.to_string()).collect();
        self.overrides.get(&(key, device)).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }
}

impl From<OverrideFile> for FusedCostTable {
    fn from(f: OverrideFile) -> Self {
        let mut t = FusedCostTable::default();
        for o in f.overrides {
            t.insert(o.types, o.device, o.seconds);
        }
        t
    }
}

/// Cost of a (possibly fused) node on device `k`: the override for its
/// member type sequence if one exists, else the stored per-device time,
/// which for fused nodes is the sum over members.
pub fn fused_cost(node: &OpNode, k: DeviceId, table: &FusedCostTable) -> Result<f64, ProfileError> {
    if let Some(t) = table.get(&node.type_seq(), k) {
        return Ok(t);
    }
    node.compute_time
        .get(&k)
        .copied()
        .ok_or(ProfileError::MissingProfile {
            member: node.members.first().copied().unwrap_or(node.id),
            device: k,
        })
}

/// Rewrites compute times of every multi-member node that has an override.
pub fn apply_overrides(nodes: &mut [OpNode], table: &FusedCostTable) {
    if table.is_empty() {
        return;
    }
    for n in nodes.iter_mut().filter(|n| n.members.len() > 1) {
        let types: Vec<String> = n.type_seq().iter().map(|s| s.to_string()).collect();
        let refs: Vec<&str> = types.iter().map(String::as_str).collect();
        for (&k, t) in n.compute_time.iter_mut() {
            if let Some(o) = table.get(&refs, k) {
                *t = o;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MB: f64 = 1e6;

    fn dev(id: u32) -> Device {
        Device {
            id,
            mem_bytes: 1 << 30,
        }
    }

    fn sym(a: u32, b: u32, bw: f64) -> [Link; 2] {
        [
            Link {
                src: a,
                dst: b,
                bandwidth_bps: bw,
            },
            Link {
                src: b,
                dst: a,
                bandwidth_bps: bw,
            },
        ]
    }

    #[test]
    fn multi_hop_bottleneck() {
        // A=1, B=2, D=3
        let links = [sym(1, 2, 10.0 * MB), sym(2, 3, 5.0 * MB)].concat();
        let c = Cluster::new(vec![dev(1), dev(2), dev(3)], links).unwrap();
        let m = effective_bandwidth(&c).unwrap();
        assert_eq!(m.bw(1, 3), Some(5.0 * MB));
        assert_eq!(comm_time(100_000_000, 0, 2, &m), 20.0);
        assert_eq!(comm_time(0, 0, 2, &m), 0.0);
    }

    #[test]
    fn direct_dominates() {
        let gbps = 40e9 / 8.0;
        let c = Cluster::new(vec![dev(1), dev(2)], sym(1, 2, gbps).to_vec()).unwrap();
        assert_eq!(effective_bandwidth(&c).unwrap().bw(1, 2), Some(gbps));
    }

    #[test]
    fn gib_unit() {
        let gib = (1u64 << 30) as f64;
        let c = Cluster::new(vec![dev(1), dev(2)], sym(1, 2, gib).to_vec()).unwrap();
        let m = effective_bandwidth(&c).unwrap();
        assert_eq!(comm_time(1 << 30, 0, 1, &m), 1.0);
    }

    #[test]
    fn one_way_link_is_disconnected() {
        let c = Cluster::new(
            vec![dev(1), dev(2)],
            vec![Link {
                src: 1,
                dst: 2,
                bandwidth_bps: 1.0,
            }],
        )
        .unwrap();
        assert_eq!(
            effective_bandwidth(&c),
            Err(ProfileError::DisconnectedCluster(vec![(2, 1)]))
        );
    }

    #[test]
    fn invalid_clusters() {
        assert_eq!(Cluster::new(vec![], vec![]), Err(ProfileError::NoDevices));
        assert_eq!(
            Cluster::new(
                vec![Device {
                    id: 1,
                    mem_bytes: 0
                }],
                vec![]
            ),
            Err(ProfileError::ZeroMemory(1))
        );
        assert!(matches!(
            Cluster::new(
                vec![dev(1)],
                vec![Link {
                    src: 1,
                    dst: 1,
                    bandwidth_bps: 1.0
                }]
            ),
            Err(ProfileError::BadLink { .. })
        ));
    }

    #[test]
    fn fused_cost_lookup() {
        let mut n = OpNode::new(1, "conv∘bn", 0, [(1, 3.0)]);
        n.members = vec![1, 2];
        let mut table = FusedCostTable::default();
        assert_eq!(fused_cost(&n, 1, &table), Ok(3.0));
        table.insert(vec!["conv".into(), "bn".into()], 1, 2.4);
        assert_eq!(fused_cost(&n, 1, &table), Ok(2.4));
        assert_eq!(
            fused_cost(&n, 7, &FusedCostTable::default()),
            Err(ProfileError::MissingProfile {
                member: 1,
                device: 7
            })
        );
        let single = OpNode::new(5, "relu", 0, [(1, 0.5)]);
        assert_eq!(fused_cost(&single, 1, &table), Ok(0.5));
    }
}
