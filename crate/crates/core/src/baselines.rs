//! Greedy list-placement baselines ("ETF-like" and "SCT-like").
//!
//! These are simplified stand-ins used for relative benchmarking, not
//! reimplementations of any published heuristic.

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::problem::Problem;
use crate::solver::{
    left_shift, list_schedule, schedule_for_assignment, Solution, SolveStats, SolveStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Device giving the operator the earliest finish time.
    EarliestFinish,
    /// Device giving the operator the earliest start time (ties: finish).
    EarliestStart,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::EarliestFinish => "ETF-like",
            BaselineKind::EarliestStart => "SCT-like",
        }
    }
}

/// Places operators one at a time in topological order, each on the
/// memory-feasible device that optimizes its start or finish under the
/// shared list scheduler, given the operators already placed.
pub fn greedy_place(p: &Problem, kind: BaselineKind) -> Result<Solution, SolveError> {
    let mut assign: Vec<Option<usize>> = vec![None; p.n_ops()];
    let mut used = vec![0u64; p.n_devices()];
    let mut stats = SolveStats::default();
    for &i in &p.topo {
        let mut choice: Option<(f64, f64, usize)> = None;
        for k in 0..p.n_devices() {
            if used[k] + p.op_mem[i] > p.dev_mem[k] {
                continue;
            }
            assign[i] = Some(k);
            let s = list_schedule(p, &assign);
            stats.nodes += 1;
            let (start, end) = (s.op_start[i], s.op_end[i]);
            let key = match kind {
                BaselineKind::EarliestFinish => (end, start),
                BaselineKind::EarliestStart => (start, end),
            };
            if choice.is_none_or(|(a, b, _)| key < (a, b)) {
                choice = Some((key.0, key.1, k));
            }
        }
        let (_, _, k) = choice.ok_or(SolveError::Infeasible)?;
        assign[i] = Some(k);
        used[k] += p.op_mem[i];
    }
    let full: Vec<usize> = assign.into_iter().map(|a| a.expect("all placed")).collect();
    let schedule = left_shift(p, &schedule_for_assignment(p, &full)?);
    stats.leaves = 1;
    Ok(Solution {
        objective_s: schedule.makespan(),
        schedule,
        status: SolveStatus::Heuristic,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CompGraph, FlowEdge, OpNode};
    use crate::profiles::{effective_bandwidth, Cluster, Device};
    use crate::solver::{solve_exact, SolveBudget};

    fn problem(nodes: Vec<OpNode>, edges: Vec<FlowEdge>) -> Problem {
        let g = CompGraph::new(nodes, edges).unwrap();
        let devs = vec![
            Device {
                id: 1,
                mem_bytes: 100,
            },
            Device {
                id: 2,
                mem_bytes: 100,
            },
        ];
        let c = Cluster::full_mesh(devs, 5e6).unwrap();
        Problem::new(&g, &c, &effective_bandwidth(&c).unwrap()).unwrap()
    }

    #[test]
    fn myopic_split_is_worse() {
        let nodes = vec![
            OpNode::new(1, "a", 1, [(1, 1.0), (2, 2.0)]),
            OpNode::new(2, "b", 1, [(1, 10.0), (2, 1.0)]),
        ];
        let edges = vec![FlowEdge {
            src: 1,
            dst: 2,
            payload_bytes: 100_000_000,
        }];
        let p = problem(nodes, edges);
        let etf = greedy_place(&p, BaselineKind::EarliestFinish).unwrap();
        let exact = solve_exact(&p, SolveBudget::default()).unwrap();
        assert_eq!(etf.objective_s, 11.0);
        assert_eq!(exact.objective_s, 3.0);
        assert!(etf.objective_s > exact.objective_s);
    }

    #[test]
    fn identical_devices_serial_chain() {
        let nodes = (1..=4)
            .map(|i| OpNode::new(i, "a", 1, [(1, i as f64), (2, i as f64)]))
            .collect();
        let edges = (1..4)
            .map(|i| FlowEdge {
                src: i,
                dst: i + 1,
                payload_bytes: 1000,
            })
            .collect();
        let p = problem(nodes, edges);
        let exact = solve_exact(&p, SolveBudget::default()).unwrap();
        for kind in [BaselineKind::EarliestFinish, BaselineKind::EarliestStart] {
            assert_eq!(
                greedy_place(&p, kind).unwrap().objective_s,
                exact.objective_s
            );
        }
        assert_eq!(exact.objective_s, 10.0);
    }

    #[test]
    fn single_op_matches_exact() {
        let p = problem(vec![OpNode::new(1, "a", 1, [(1, 2.0), (2, 3.0)])], vec![]);
        let g = greedy_place(&p, BaselineKind::EarliestStart).unwrap();
        assert_eq!(
            g.objective_s,
            solve_exact(&p, SolveBudget::default()).unwrap().objective_s
        );
    }
}
