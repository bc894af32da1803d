//! Exact placement search.
//!
//! Branch-and-bound enumerates device assignments (operators in topological
//! order, devices in ascending id). Each complete assignment is turned into a
//! schedule by an event-driven list scheduler that mirrors the MILP's
//! execution semantics:
//!
//! * a device runs one operator at a time;
//! * a flow between co-located operators completes instantly;
//! * a cross-device flow holds the outbound slot of its source device and the
//!   inbound slot of its destination device for its whole transfer, so two
//!   flows leaving (or entering) the same device never overlap.
//!
//! At each event time the scheduler first settles every completion at that
//! time (cascading through instant flows), then dispatches once: each idle
//! device in ascending order takes its ready operator with the largest
//! bottom level (ties: lowest index), then ready cross-device flows in the
//! same priority order start when both slots are free. Rounds repeat while
//! zero-length work keeps completing at the same instant.

use std::time::{Duration, Instant};

use crate::baselines::{greedy_place, BaselineKind};
use crate::error::SolveError;
use crate::problem::Problem;
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveBudget {
    pub time_limit: Option<Duration>,
    /// Relative optimality gap in `[0, 1)`.
    pub gap: f64,
    pub node_limit: Option<u64>,
}

impl Default for SolveBudget {
    fn default() -> Self {
        SolveBudget {
            time_limit: None,
            gap: 0.0,
            node_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    /// Tree exhausted with zero gap.
    Optimal,
    /// Tree exhausted; objective within the given relative gap of optimal.
    Feasible(f64),
    /// A time or node limit stopped the search.
    Budget,
    /// Produced by a heuristic with no optimality claim.
    Heuristic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub nodes: u64,
    pub leaves: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub schedule: Schedule,
    pub objective_s: f64,
    pub status: SolveStatus,
    pub stats: SolveStats,
}

impl Solution {
    /// Device index per operator index.
    pub fn placement(&self) -> &[usize] {
        &self.schedule.assignment
    }
}

#[derive(Clone, Copy)]
enum Task {
    Op(usize),
    Flow(usize),
}

/// Longest remaining path (own duration included) under a possibly partial
/// assignment; inactive nodes get 0.
pub(crate) fn bottom_levels(p: &Problem, assign: &[Option<usize>]) -> (Vec<f64>, Vec<f64>) {
    let mut bl_op = vec![0.0; p.n_ops()];
    let mut bl_flow = vec![0.0; p.n_flows()];
    for &i in p.topo.iter().rev() {
        let Some(k) = assign[i] else { continue };
        let mut tail: f64 = 0.0;
        for &q in &p.flows_out[i] {
            let f = p.flows[q];
            if let Some(b) = assign[f.dst] {
                bl_flow[q] = p.comm(q, k, b) + bl_op[f.dst];
                tail = tail.max(bl_flow[q]);
            }
        }
        bl_op[i] = p.op_time(i, k) + tail;
    }
    (bl_op, bl_flow)
}

/// Event-driven list schedule of the assigned part of the graph. Operators
/// without a device and flows touching them are skipped and keep NaN times.
pub(crate) fn list_schedule(p: &Problem, assign: &[Option<usize>]) -> Schedule {
    let (n, m, kdev) = (p.n_ops(), p.n_flows(), p.n_devices());
    let (bl_op, bl_flow) = bottom_levels(p, assign);
    let active_flow: Vec<bool> = p
        .flows
        .iter()
        .map(|f| assign[f.src].is_some() && assign[f.dst].is_some())
        .collect();
    let chan = |q: usize| {
        let f = p.flows[q];
        (
            assign[f.src].expect("active"),
            assign[f.dst].expect("active"),
        )
    };

    let mut s = Schedule {
        assignment: assign.iter().map(|a| a.unwrap_or(usize::MAX)).collect(),
        op_start: vec![f64::NAN; n],
        op_end: vec![f64::NAN; n],
        flow_start: vec![f64::NAN; m],
        flow_end: vec![f64::NAN; m],
        flow_channel: vec![None; m],
    };
    let mut waiting: Vec<usize> = (0..n)
        .map(|i| p.flows_in[i].iter().filter(|&&q| active_flow[q]).count())
        .collect();
    let mut ready_ops: Vec<Vec<usize>> = vec![Vec::new(); kdev];
    for i in 0..n {
        if let (Some(k), 0) = (assign[i], waiting[i]) {
            ready_ops[k].push(i);
        }
    }
    let total =
        assign.iter().filter(|a| a.is_some()).count() + active_flow.iter().filter(|&&a| a).count();
    let mut ready_flows: Vec<usize> = Vec::new();
    let mut running: Vec<(f64, Task)> = Vec::new();
    let mut dev_busy = vec![false; kdev];
    let mut out_busy = vec![false; kdev];
    let mut in_busy = vec![false; kdev];
    let mut done = 0;
    let mut t = 0.0;

    loop {
        loop {
            let mut progress = false;
            let mut work: Vec<Task> = Vec::new();
            running.retain(|&(end, task)| {
                if end <= t {
                    work.push(task);
                    false
                } else {
                    true
                }
            });
            while let Some(task) = work.pop() {
                done += 1;
                progress = true;
                match task {
                    Task::Op(i) => {
                        dev_busy[assign[i].expect("active")] = false;
                        for &q in &p.flows_out[i] {
                            if !active_flow[q] {
                                continue;
                            }
                            let (a, b) = chan(q);
                            if a == b {
                                s.flow_start[q] = t;
                                s.flow_end[q] = t;
                                work.push(Task::Flow(q));
                            } else {
                                ready_flows.push(q);
                            }
                        }
                    }
                    Task::Flow(q) => {
                        let (a, b) = chan(q);
                        if a != b {
                            out_busy[a] = false;
                            in_busy[b] = false;
                        }
                        let j = p.flows[q].dst;
                        waiting[j] -= 1;
                        if waiting[j] == 0 {
                            ready_ops[assign[j].expect("active")].push(j);
                        }
                    }
                }
            }

            for k in 0..kdev {
                if dev_busy[k] || ready_ops[k].is_empty() {
                    continue;
                }
                let pos = best(&ready_ops[k], &bl_op);
                let i = ready_ops[k].swap_remove(pos);
                let end = t + p.op_time(i, k);
                s.op_start[i] = t;
                s.op_end[i] = end;
                dev_busy[k] = true;
                running.push((end, Task::Op(i)));
                progress = true;
            }

            ready_flows.sort_by(|&x, &y| bl_flow[y].total_cmp(&bl_flow[x]).then(x.cmp(&y)));
            let mut blocked = Vec::new();
            for q in ready_flows.drain(..) {
                let (a, b) = chan(q);
                if out_busy[a] || in_busy[b] {
                    blocked.push(q);
                    continue;
                }
                let end = t + p.comm(q, a, b);
                s.flow_start[q] = t;
                s.flow_end[q] = end;
                s.flow_channel[q] = Some((a, b));
                out_busy[a] = true;
                in_busy[b] = true;
                running.push((end, Task::Flow(q)));
                progress = true;
            }
            ready_flows = blocked;

            if !progress {
                break;
            }
        }
        if done == total {
            break;
        }
        t = running.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        assert!(t.is_finite(), "list scheduler stalled with pending work");
    }
    s
}

fn best(cands: &[usize], prio: &[f64]) -> usize {
    let mut best = 0;
    for (pos, &i) in cands.iter().enumerate().skip(1) {
        let b = cands[best];
        if prio[i] > prio[b] || (prio[i] == prio[b] && i < b) {
            best = pos;
        }
    }
    best
}

pub(crate) fn check_assignment_memory(p: &Problem, assign: &[usize]) -> Result<(), SolveError> {
    let mut used = vec![0u64; p.n_devices()];
    for (i, &k) in assign.iter().enumerate() {
        used[k] += p.op_mem[i];
    }
    for (k, &u) in used.iter().enumerate() {
        if u > p.dev_mem[k] {
            return Err(SolveError::MemoryExceeded {
                device: p.device_ids[k],
                overflow: u - p.dev_mem[k],
            });
        }
    }
    Ok(())
}

/// Schedules a complete assignment (device index per operator index).
pub fn schedule_for_assignment(p: &Problem, assign: &[usize]) -> Result<Schedule, SolveError> {
    if assign.len() != p.n_ops() || assign.iter().any(|&k| k >= p.n_devices()) {
        return Err(SolveError::BadAssignment {
            expected: p.n_ops(),
            got: assign.len(),
        });
    }
    check_assignment_memory(p, assign)?;
    let partial: Vec<Option<usize>> = assign.iter().map(|&k| Some(k)).collect();
    Ok(list_schedule(p, &partial))
}

/// Recomputes every start as the earliest time allowed by its predecessors
/// and by the previous task on each resource it uses, keeping the per-resource
/// order of `s`. Never increases any start time.
pub fn left_shift(p: &Problem, s: &Schedule) -> Schedule {
    let (n, m, kdev) = (p.n_ops(), p.n_flows(), p.n_devices());
    let mut pos = vec![0usize; n];
    for (r, &i) in p.topo.iter().enumerate() {
        pos[i] = r;
    }
    // ops: 2*pos, flows: 2*pos(src)+1 is a topological key of the augmented graph;
    // zero-length tasks sort ahead of longer ones sharing their start
    let key = |v: usize| {
        if v < n {
            2 * pos[v]
        } else {
            2 * pos[p.flows[v - n].src] + 1
        }
    };
    let mut order: Vec<usize> = (0..n + m).collect();
    order.sort_by(|&a, &b| {
        s.interval(a)
            .0
            .total_cmp(&s.interval(b).0)
            .then(s.interval(a).1.total_cmp(&s.interval(b).1))
            .then(key(a).cmp(&key(b)))
    });

    let mut out = s.clone();
    let mut dev_free = vec![0.0f64; kdev];
    let mut out_free = vec![0.0f64; kdev];
    let mut in_free = vec![0.0f64; kdev];
    for v in order {
        if v < n {
            let k = s.assignment[v];
            let ready = p.flows_in[v]
                .iter()
                .map(|&q| out.flow_end[q])
                .fold(0.0, f64::max);
            let start = ready.max(dev_free[k]);
            out.op_start[v] = start;
            out.op_end[v] = start + p.op_time(v, k);
            dev_free[k] = out.op_end[v];
        } else {
            let q = v - n;
            let f = p.flows[q];
            let (a, b) = (s.assignment[f.src], s.assignment[f.dst]);
            let mut start = out.op_end[f.src];
            if a != b {
                start = start.max(out_free[a]).max(in_free[b]);
            }
            out.flow_start[q] = start;
            out.flow_end[q] = start + p.comm(q, a, b);
            if a != b {
                out_free[a] = out.flow_end[q];
                in_free[b] = out.flow_end[q];
            }
        }
    }
    out
}

/// Valid lower bound on the makespan of any completion of `assign`: the
/// largest of the contention-free critical path, the heaviest device load,
/// and total work spread over all devices.
///
/// The critical path keeps, per operator and candidate device, the earliest
/// possible finish: each predecessor contributes its best finish plus the
/// transfer to that device. Placed operators have a single candidate.
pub fn lower_bound(p: &Problem, assign: &[Option<usize>]) -> f64 {
    let kdev = p.n_devices();
    let mut finish = vec![f64::INFINITY; p.n_ops() * kdev];
    let mut load = vec![0.0f64; kdev];
    let mut work = 0.0;
    let mut cp: f64 = 0.0;
    for &i in &p.topo {
        let mut best = f64::INFINITY;
        let mut min_dur = f64::INFINITY;
        for k in 0..kdev {
            if assign[i].is_some_and(|a| a != k) {
                continue;
            }
            let mut start: f64 = 0.0;
            for &q in &p.flows_in[i] {
                let j = p.flows[q].src;
                let arrive = (0..kdev)
                    .map(|a| finish[j * kdev + a] + p.comm(q, a, k))
                    .fold(f64::INFINITY, f64::min);
                start = start.max(arrive);
            }
            let dur = p.op_time(i, k);
            finish[i * kdev + k] = start + dur;
            best = best.min(start + dur);
            min_dur = min_dur.min(dur);
        }
        if let Some(k) = assign[i] {
            load[k] += min_dur;
        }
        work += min_dur;
        cp = cp.max(best);
    }
    let max_load = load.into_iter().fold(0.0, f64::max);
    cp.max(max_load).max(work / kdev as f64)
}

// relative slack that keeps float noise in bound arithmetic from pruning
// a leaf that ties or barely beats the incumbent
const BOUND_SLACK: f64 = 1e-10;

struct Search<'p> {
    p: &'p Problem,
    budget: SolveBudget,
    deadline: Option<Instant>,
    assign: Vec<Option<usize>>,
    used: Vec<u64>,
    remaining_mem: u64,
    best: Option<(f64, Vec<usize>)>,
    seeded: bool,
    stats: SolveStats,
    stopped: bool,
}

impl Search<'_> {
    fn out_of_budget(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        if let Some(limit) = self.budget.node_limit {
            if self.stats.nodes >= limit {
                self.stopped = true;
            }
        }
        if let Some(d) = self.deadline {
            if self.stats.nodes.is_multiple_of(64) && Instant::now() >= d {
                self.stopped = true;
            }
        }
        self.stopped
    }

    fn prunes(&self, bound: f64) -> bool {
        let Some((inc, _)) = &self.best else {
            return false;
        };
        let lb = bound * (1.0 - BOUND_SLACK);
        let thr = inc * (1.0 - self.budget.gap);
        if self.seeded {
            lb > thr
        } else {
            lb >= thr
        }
    }

    fn dfs(&mut self, depth: usize) {
        self.stats.nodes += 1;
        if self.out_of_budget() {
            return;
        }
        let p = self.p;
        if depth == p.n_ops() {
            self.stats.leaves += 1;
            let full: Vec<usize> = self.assign.iter().map(|a| a.expect("complete")).collect();
            let obj = list_schedule(p, &self.assign).makespan();
            let better = match &self.best {
                None => true,
                Some((inc, _)) => obj < *inc || (self.seeded && obj <= *inc),
            };
            if better {
                self.best = Some((obj, full));
                self.seeded = false;
            }
            return;
        }
        let i = p.topo[depth];
        let mi = p.op_mem[i];
        for k in 0..p.n_devices() {
            if self.used[k] + mi > p.dev_mem[k] {
                continue;
            }
            self.assign[i] = Some(k);
            self.used[k] += mi;
            self.remaining_mem -= mi;
            let free: u64 = (0..p.n_devices())
                .map(|d| p.dev_mem[d] - self.used[d])
                .sum();
            if self.remaining_mem <= free && !self.prunes(lower_bound(p, &self.assign)) {
                self.dfs(depth + 1);
            }
            self.remaining_mem += mi;
            self.used[k] -= mi;
            self.assign[i] = None;
            if self.stopped {
                return;
            }
        }
    }
}

/// Branch-and-bound over assignments. With `gap = 0` and no limits the
/// result is the lexicographically first (topological operator order,
/// ascending device) assignment of minimum makespan.
pub fn solve_exact(p: &Problem, budget: SolveBudget) -> Result<Solution, SolveError> {
    assert!((0.0..1.0).contains(&budget.gap), "gap must lie in [0, 1)");
    // leaves are compared on the raw list-schedule makespan, so the seed must be too
    let seed = greedy_place(p, BaselineKind::EarliestFinish).ok().map(|s| {
        let a = s.schedule.assignment;
        let partial: Vec<Option<usize>> = a.iter().map(|&k| Some(k)).collect();
        (list_schedule(p, &partial).makespan(), a)
    });
    let mut search = Search {
        p,
        budget,
        deadline: budget.time_limit.map(|d| Instant::now() + d),
        assign: vec![None; p.n_ops()],
        used: vec![0; p.n_devices()],
        remaining_mem: p.op_mem.iter().sum(),
        seeded: seed.is_some(),
        best: seed,
        stats: SolveStats::default(),
        stopped: false,
    };
    search.dfs(0);
    let (_, assign) = search.best.ok_or(SolveError::Infeasible)?;
    let status = if search.stopped {
        SolveStatus::Budget
    } else if budget.gap == 0.0 {
        SolveStatus::Optimal
    } else {
        SolveStatus::Feasible(budget.gap)
    };
    let schedule = left_shift(p, &schedule_for_assignment(p, &assign)?);
    Ok(Solution {
        objective_s: schedule.makespan(),
        schedule,
        status,
        stats: search.stats,
    })
}

/// Largest `ops * log2(devices)` brute force will enumerate.
pub const BRUTE_FORCE_GUARD_BITS: f64 = 24.0;

/// Enumerates every assignment in lexicographic order and keeps the first
/// one of minimum makespan.
pub fn brute_force(p: &Problem) -> Result<Solution, SolveError> {
    let (n, k) = (p.n_ops(), p.n_devices());
    if n as f64 * (k as f64).log2() > BRUTE_FORCE_GUARD_BITS + 1e-9 {
        return Err(SolveError::TooLarge { ops: n, devices: k });
    }
    let mut digits = vec![0usize; n];
    let mut assign = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stats = SolveStats::default();
    loop {
        for (d, &i) in p.topo.iter().enumerate() {
            assign[i] = digits[d];
        }
        stats.leaves += 1;
        if check_assignment_memory(p, &assign).is_ok() {
            let partial: Vec<Option<usize>> = assign.iter().map(|&x| Some(x)).collect();
            let obj = list_schedule(p, &partial).makespan();
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, assign.clone()));
            }
        }
        // odometer, last position fastest
        let mut d = n;
        loop {
            if d == 0 {
                let (_, assign) = best.ok_or(SolveError::Infeasible)?;
                let schedule = left_shift(p, &schedule_for_assignment(p, &assign)?);
                stats.nodes = stats.leaves;
                return Ok(Solution {
                    objective_s: schedule.makespan(),
                    schedule,
                    status: SolveStatus::Optimal,
                    stats,
                });
            }
            d -= 1;
            digits[d] += 1;
            if digits[d] < k {
                break;
            }
            digits[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CompGraph, FlowEdge, OpNode};
    use crate::profiles::{effective_bandwidth, Cluster, Device, Link};

    pub(crate) fn two_device_problem(
        nodes: Vec<OpNode>,
        edges: Vec<FlowEdge>,
        mem: [u64; 2],
    ) -> Problem {
        let g = CompGraph::new(nodes, edges).unwrap();
        let c = Cluster::new(
            vec![
                Device {
                    id: 1,
                    mem_bytes: mem[0],
                },
                Device {
                    id: 2,
                    mem_bytes: mem[1],
                },
            ],
            vec![
                Link {
                    src: 1,
                    dst: 2,
                    bandwidth_bps: 5e6,
                },
                Link {
                    src: 2,
                    dst: 1,
                    bandwidth_bps: 5e6,
                },
            ],
        )
        .unwrap();
        let mesh = effective_bandwidth(&c).unwrap();
        Problem::new(&g, &c, &mesh).unwrap()
    }

    #[test]
    fn single_op() {
        let p = two_device_problem(
            vec![OpNode::new(1, "a", 1, [(1, 2.0), (2, 3.0)])],
            vec![],
            [10, 10],
        );
        let s = schedule_for_assignment(&p, &[0]).unwrap();
        assert_eq!((s.op_start[0], s.op_end[0], s.makespan()), (0.0, 2.0, 2.0));
        let sol = solve_exact(&p, SolveBudget::default()).unwrap();
        assert_eq!(sol.placement(), &[0]);
        assert_eq!(sol.objective_s, 2.0);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(brute_force(&p).unwrap().stats.leaves, 2);
    }

    #[test]
    fn chain_split_pays_transfer() {
        let nodes = vec![
            OpNode::new(1, "a", 1, [(1, 2.0), (2, 2.0)]),
            OpNode::new(2, "b", 1, [(1, 3.0), (2, 3.0)]),
        ];
        let edges = vec![FlowEdge {
            src: 1,
            dst: 2,
            payload_bytes: 100_000_000,
        }];
        let p = two_device_problem(nodes, edges, [10, 10]);
        assert_eq!(
            schedule_for_assignment(&p, &[0, 0]).unwrap().makespan(),
            5.0
        );
        let s = schedule_for_assignment(&p, &[0, 1]).unwrap();
        assert_eq!((s.flow_start[0], s.flow_end[0]), (2.0, 22.0));
        assert_eq!(s.makespan(), 25.0);
        assert_eq!(s.flow_channel[0], Some((0, 1)));
    }

    #[test]
    fn memory_forces_device() {
        const GB: u64 = 1_000_000_000;
        let p = two_device_problem(
            vec![OpNode::new(1, "a", 10 * GB, [(1, 1.0), (2, 5.0)])],
            vec![],
            [8 * GB, 16 * GB],
        );
        assert_eq!(
            schedule_for_assignment(&p, &[0]),
            Err(SolveError::MemoryExceeded {
                device: 1,
                overflow: 2 * GB
            })
        );
        let sol = solve_exact(&p, SolveBudget::default()).unwrap();
        assert_eq!(sol.placement(), &[1]);
        assert_eq!(sol.objective_s, 5.0);
    }

    #[test]
    fn infeasible_memory() {
        let p = two_device_problem(
            vec![OpNode::new(1, "a", 100, [(1, 1.0), (2, 1.0)])],
            vec![],
            [10, 10],
        );
        assert_eq!(
            solve_exact(&p, SolveBudget::default()),
            Err(SolveError::Infeasible)
        );
        assert_eq!(brute_force(&p), Err(SolveError::Infeasible));
    }

    #[test]
    fn brute_force_guard() {
        let nodes = (1..=25)
            .map(|i| OpNode::new(i, "a", 0, [(1, 1.0), (2, 1.0)]))
            .collect();
        let p = two_device_problem(nodes, vec![], [1, 1]);
        assert_eq!(
            brute_force(&p),
            Err(SolveError::TooLarge {
                ops: 25,
                devices: 2
            })
        );
    }

    #[test]
    fn lower_bound_monotone_along_branch() {
        let nodes = vec![
            OpNode::new(1, "a", 1, [(1, 2.0), (2, 1.0)]),
            OpNode::new(2, "b", 1, [(1, 1.0), (2, 4.0)]),
            OpNode::new(3, "c", 1, [(1, 3.0), (2, 3.0)]),
        ];
        let edges = vec![
            FlowEdge {
                src: 1,
                dst: 2,
                payload_bytes: 5_000_000,
            },
            FlowEdge {
                src: 1,
                dst: 3,
                payload_bytes: 10_000_000,
            },
        ];
        let p = two_device_problem(nodes, edges, [10, 10]);
        let mut assign = vec![None; 3];
        let mut last = lower_bound(&p, &assign);
        for (i, k) in [(0, 1), (1, 0), (2, 1)] {
            assign[i] = Some(k);
            let b = lower_bound(&p, &assign);
            assert!(b >= last);
            last = b;
        }
        let full: Vec<usize> = assign.iter().map(|a| a.unwrap()).collect();
        assert!(last <= schedule_for_assignment(&p, &full).unwrap().makespan());
    }
}
