//! Discrete-event replay of a placement and independent feasibility checks.
//!
//! [`simulate`] executes the same dispatch rule as the solver's list
//! scheduler but is written against an event queue, so agreement between the
//! two is a real cross-check rather than a tautology.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::graph::{DeviceId, NodeId};
use crate::problem::Problem;
use crate::schedule::Schedule;

/// Absolute tolerance on times and durations.
pub const TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    OpStart,
    OpEnd,
    FlowStart,
    FlowEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    pub kind: EventKind,
    pub node: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<[DeviceId; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub makespan_s: f64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub makespan_s: f64,
    pub trace: Vec<Event>,
    pub schedule: Schedule,
}

#[derive(Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Done {
    Op(usize),
    Flow(usize),
}

struct Sim<'p> {
    p: &'p Problem,
    place: &'p [usize],
    op_rank: Vec<f64>,
    flow_rank: Vec<f64>,
    queue: BinaryHeap<Reverse<(Time, Done)>>,
    // ready sets ordered by (descending rank, index)
    ready_ops: Vec<BTreeSet<(Reverse<Time>, usize)>>,
    ready_flows: BTreeSet<(Reverse<Time>, usize)>,
    pending_inputs: Vec<usize>,
    device_idle: Vec<bool>,
    uplink_idle: Vec<bool>,
    downlink_idle: Vec<bool>,
    out: Schedule,
}

impl<'p> Sim<'p> {
    fn new(p: &'p Problem, place: &'p [usize]) -> Self {
        let (n, m, k) = (p.n_ops(), p.n_flows(), p.n_devices());
        let mut op_rank = vec![f64::NAN; n];
        let mut flow_rank = vec![f64::NAN; m];
        for i in 0..n {
            rank_op(p, place, i, &mut op_rank, &mut flow_rank);
        }
        let channel = p
            .flows
            .iter()
            .map(|f| (place[f.src] != place[f.dst]).then_some((place[f.src], place[f.dst])))
            .collect();
        Sim {
            p,
            place,
            op_rank,
            flow_rank,
            queue: BinaryHeap::new(),
            ready_ops: vec![BTreeSet::new(); k],
            ready_flows: BTreeSet::new(),
            pending_inputs: (0..n).map(|i| p.flows_in[i].len()).collect(),
            device_idle: vec![true; k],
            uplink_idle: vec![true; k],
            downlink_idle: vec![true; k],
            out: Schedule {
                assignment: place.to_vec(),
                op_start: vec![f64::NAN; n],
                op_end: vec![f64::NAN; n],
                flow_start: vec![f64::NAN; m],
                flow_end: vec![f64::NAN; m],
                flow_channel: channel,
            },
        }
    }

    fn mark_ready(&mut self, i: usize) {
        self.ready_ops[self.place[i]].insert((Reverse(Time(self.op_rank[i])), i));
    }

    fn on_done(&mut self, now: f64, done: Done) {
        match done {
            Done::Op(i) => {
                self.device_idle[self.place[i]] = true;
                for &q in &self.p.flows_out[i] {
                    match self.out.flow_channel[q] {
                        None => {
                            self.out.flow_start[q] = now;
                            self.out.flow_end[q] = now;
                            self.on_done(now, Done::Flow(q));
                        }
                        Some(_) => {
                            self.ready_flows
                                .insert((Reverse(Time(self.flow_rank[q])), q));
                        }
                    }
                }
            }
            Done::Flow(q) => {
                if let Some((a, b)) = self.out.flow_channel[q] {
                    self.uplink_idle[a] = true;
                    self.downlink_idle[b] = true;
                }
                let j = self.p.flows[q].dst;
                self.pending_inputs[j] -= 1;
                if self.pending_inputs[j] == 0 {
                    self.mark_ready(j);
                }
            }
        }
    }

    fn dispatch(&mut self, now: f64) {
        for k in 0..self.device_idle.len() {
            if !self.device_idle[k] {
                continue;
            }
            if let Some(&(r, i)) = self.ready_ops[k].iter().next() {
                self.ready_ops[k].remove(&(r, i));
                self.device_idle[k] = false;
                let end = now + self.p.op_time(i, k);
                self.out.op_start[i] = now;
                self.out.op_end[i] = end;
                self.queue.push(Reverse((Time(end), Done::Op(i))));
            }
        }
        let candidates: Vec<_> = self.ready_flows.iter().copied().collect();
        for (r, q) in candidates {
            let (a, b) = self.out.flow_channel[q].expect("cross-device flow");
            if self.uplink_idle[a] && self.downlink_idle[b] {
                self.ready_flows.remove(&(r, q));
                self.uplink_idle[a] = false;
                self.downlink_idle[b] = false;
                let end = now + self.p.comm(q, a, b);
                self.out.flow_start[q] = now;
                self.out.flow_end[q] = end;
                self.queue.push(Reverse((Time(end), Done::Flow(q))));
            }
        }
    }

    fn run(mut self) -> Schedule {
        for i in 0..self.p.n_ops() {
            if self.pending_inputs[i] == 0 {
                self.mark_ready(i);
            }
        }
        self.dispatch(0.0);
        while let Some(&Reverse((Time(now), _))) = self.queue.peek() {
            while let Some(&Reverse((Time(t), done))) = self.queue.peek() {
                if t != now {
                    break;
                }
                self.queue.pop();
                self.on_done(now, done);
            }
            self.dispatch(now);
        }
        self.out
    }
}

fn rank_op(
    p: &Problem,
    place: &[usize],
    i: usize,
    op_rank: &mut [f64],
    flow_rank: &mut [f64],
) -> f64 {
    if !op_rank[i].is_nan() {
        return op_rank[i];
    }
    let mut tail: f64 = 0.0;
    for &q in &p.flows_out[i] {
        let j = p.flows[q].dst;
        let r = p.comm(q, place[i], place[j]) + rank_op(p, place, j, op_rank, flow_rank);
        flow_rank[q] = r;
        tail = tail.max(r);
    }
    op_rank[i] = p.op_time(i, place[i]) + tail;
    op_rank[i]
}

fn trace_of(p: &Problem, s: &Schedule) -> Vec<Event> {
    let mut events = Vec::with_capacity(2 * (p.n_ops() + p.n_flows()));
    for i in 0..p.n_ops() {
        let device = Some(p.device_ids[s.assignment[i]]);
        let node = p.op_ids[i];
        events.push(Event {
            time_s: s.op_start[i],
            kind: EventKind::OpStart,
            node,
            device,
            channel: None,
        });
        events.push(Event {
            time_s: s.op_end[i],
            kind: EventKind::OpEnd,
            node,
            device,
            channel: None,
        });
    }
    for (q, f) in p.flows.iter().enumerate() {
        let channel = s.flow_channel[q].map(|(a, b)| [p.device_ids[a], p.device_ids[b]]);
        let device = channel.is_none().then(|| p.device_ids[s.assignment[f.src]]);
        events.push(Event {
            time_s: s.flow_start[q],
            kind: EventKind::FlowStart,
            node: f.id,
            device,
            channel,
        });
        events.push(Event {
            time_s: s.flow_end[q],
            kind: EventKind::FlowEnd,
            node: f.id,
            device,
            channel,
        });
    }
    events.sort_by(|a, b| {
        a.time_s
            .total_cmp(&b.time_s)
            .then(a.kind.cmp(&b.kind))
            .then(a.node.cmp(&b.node))
    });
    events
}

/// Replays `placement` (device index per operator index) and returns the
/// resulting makespan, event trace, and timed schedule.
pub fn simulate(p: &Problem, placement: &[usize]) -> Result<SimOutcome, SolveError> {
    if placement.len() != p.n_ops() || placement.iter().any(|&k| k >= p.n_devices()) {
        return Err(SolveError::BadAssignment {
            expected: p.n_ops(),
            got: placement.len(),
        });
    }
    let mut used = vec![0u64; p.n_devices()];
    for (i, &k) in placement.iter().enumerate() {
        used[k] += p.op_mem[i];
    }
    if let Some(k) = (0..used.len()).find(|&k| used[k] > p.dev_mem[k]) {
        return Err(SolveError::MemoryExceeded {
            device: p.device_ids[k],
            overflow: used[k] - p.dev_mem[k],
        });
    }
    let schedule = Sim::new(p, placement).run();
    let makespan_s = schedule.op_end.iter().copied().fold(0.0, f64::max);
    Ok(SimOutcome {
        makespan_s,
        trace: trace_of(p, &schedule),
        schedule,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    DeviceOverlap,
    SourceChannelOverlap,
    DestChannelOverlap,
    PrecedenceBreak,
    MemoryOver,
    DurationMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub details: String,
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.1 - TIME_TOL && b.0 < a.1 - TIME_TOL
}

/// Checks a timed schedule against every execution constraint. Touching
/// intervals are legal; an empty result means feasible.
pub fn check_feasibility(p: &Problem, s: &Schedule) -> Vec<Violation> {
    let mut v = Vec::new();
    let (n, m) = (p.n_ops(), p.n_flows());
    let mut push = |kind, details: String| v.push(Violation { kind, details });

    let mut used = vec![0u64; p.n_devices()];
    for i in 0..n {
        used[s.assignment[i]] += p.op_mem[i];
        let want = p.op_time(i, s.assignment[i]);
        if !(s.op_end[i] - s.op_start[i] - want).abs().le(&TIME_TOL) || s.op_start[i] < -TIME_TOL {
            push(
                ViolationKind::DurationMismatch,
                format!(
                    "op {} lasts {} instead of {}",
                    p.op_ids[i],
                    s.op_end[i] - s.op_start[i],
                    want
                ),
            );
        }
    }
    for (k, &u) in used.iter().enumerate() {
        if u > p.dev_mem[k] {
            push(
                ViolationKind::MemoryOver,
                format!(
                    "device {} holds {} of {} bytes",
                    p.device_ids[k], u, p.dev_mem[k]
                ),
            );
        }
    }
    for q in 0..m {
        let f = p.flows[q];
        let (a, b) = (s.assignment[f.src], s.assignment[f.dst]);
        let want = p.comm(q, a, b);
        if !(s.flow_end[q] - s.flow_start[q] - want).abs().le(&TIME_TOL) {
            push(
                ViolationKind::DurationMismatch,
                format!(
                    "flow {} lasts {} instead of {}",
                    f.id,
                    s.flow_end[q] - s.flow_start[q],
                    want
                ),
            );
        }
        if s.op_end[f.src] > s.flow_start[q] + TIME_TOL {
            push(
                ViolationKind::PrecedenceBreak,
                format!("flow {} starts before op {} ends", f.id, p.op_ids[f.src]),
            );
        }
        if s.flow_end[q] > s.op_start[f.dst] + TIME_TOL {
            push(
                ViolationKind::PrecedenceBreak,
                format!("op {} starts before flow {} ends", p.op_ids[f.dst], f.id),
            );
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if s.assignment[i] == s.assignment[j]
                && overlaps((s.op_start[i], s.op_end[i]), (s.op_start[j], s.op_end[j]))
            {
                push(
                    ViolationKind::DeviceOverlap,
                    format!("ops {} and {}", p.op_ids[i], p.op_ids[j]),
                );
            }
        }
    }
    let cross: Vec<usize> = (0..m)
        .filter(|&q| s.assignment[p.flows[q].src] != s.assignment[p.flows[q].dst])
        .collect();
    for (x, &q) in cross.iter().enumerate() {
        for &r in &cross[x + 1..] {
            let (fq, fr) = (p.flows[q], p.flows[r]);
            let iq = (s.flow_start[q], s.flow_end[q]);
            let ir = (s.flow_start[r], s.flow_end[r]);
            if !overlaps(iq, ir) {
                continue;
            }
            if s.assignment[fq.src] == s.assignment[fr.src] {
                push(
                    ViolationKind::SourceChannelOverlap,
                    format!("flows {} and {}", fq.id, fr.id),
                );
            }
            if s.assignment[fq.dst] == s.assignment[fr.dst] {
                push(
                    ViolationKind::DestChannelOverlap,
                    format!("flows {} and {}", fq.id, fr.id),
                );
            }
        }
    }
    v
}
