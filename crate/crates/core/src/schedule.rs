//! Timed placements and their JSON form.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::{DeviceId, NodeId};
use crate::problem::Problem;

/// Device assignment plus start/end times for every operator and flow.
/// Device and operator references are indices into the owning [`Problem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub assignment: Vec<usize>,
    pub op_start: Vec<f64>,
    pub op_end: Vec<f64>,
    pub flow_start: Vec<f64>,
    pub flow_end: Vec<f64>,
    /// `(source device, destination device)` for flows that cross devices.
    pub flow_channel: Vec<Option<(usize, usize)>>,
}

impl Schedule {
    pub fn makespan(&self) -> f64 {
        self.op_end.iter().copied().fold(0.0, f64::max)
    }

    /// Start and end of augmented-graph node `n` (ops first, then flows).
    pub fn interval(&self, n: usize) -> (f64, f64) {
        let a = self.op_start.len();
        if n < a {
            (self.op_start[n], self.op_end[n])
        } else {
            (self.flow_start[n - a], self.flow_end[n - a])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub op: NodeId,
    pub device: DeviceId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub node: NodeId,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<[DeviceId; 2]>,
}

/// `{assignments, schedule, makespan_s}` placement interchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementFile {
    pub assignments: Vec<Assignment>,
    pub schedule: Vec<ScheduleEntry>,
    pub makespan_s: f64,
}

impl PlacementFile {
    pub fn from_schedule(p: &Problem, s: &Schedule) -> Self {
        let assignments = s
            .assignment
            .iter()
            .enumerate()
            .map(|(i, &k)| Assignment {
                op: p.op_ids[i],
                device: p.device_ids[k],
            })
            .collect();
        let mut schedule: Vec<ScheduleEntry> = (0..p.n_ops())
            .map(|i| ScheduleEntry {
                node: p.op_ids[i],
                start_s: s.op_start[i],
                end_s: s.op_end[i],
                channel: None,
            })
            .collect();
        schedule.extend(p.flows.iter().enumerate().map(|(q, f)| ScheduleEntry {
            node: f.id,
            start_s: s.flow_start[q],
            end_s: s.flow_end[q],
            channel: s.flow_channel[q].map(|(a, b)| [p.device_ids[a], p.device_ids[b]]),
        }));
        PlacementFile {
            assignments,
            schedule,
            makespan_s: s.makespan(),
        }
    }

    /// Device index per operator index.
    pub fn assignment_indices(&self, p: &Problem) -> Result<Vec<usize>, Error> {
        let mut out = vec![usize::MAX; p.n_ops()];
        for a in &self.assignments {
            let i = p
                .op_index(a.op)
                .ok_or_else(|| Error::Invalid(format!("unknown operator {}", a.op)))?;
            let k = p
                .device_index(a.device)
                .ok_or_else(|| Error::Invalid(format!("unknown device {}", a.device)))?;
            out[i] = k;
        }
        if let Some(i) = out.iter().position(|&k| k == usize::MAX) {
            return Err(Error::Invalid(format!(
                "operator {} is not assigned",
                p.op_ids[i]
            )));
        }
        Ok(out)
    }

    /// Rebuilds index-based times; entries missing from the file are an error.
    pub fn to_schedule(&self, p: &Problem) -> Result<Schedule, Error> {
        let assignment = self.assignment_indices(p)?;
        let index = p.aug.index_map();
        let n = p.aug.n_total();
        let mut times = vec![None; n];
        for e in &self.schedule {
            let i = *index
                .get(&e.node)
                .ok_or_else(|| Error::Invalid(format!("unknown schedule node {}", e.node)))?;
            times[i] = Some((e.start_s, e.end_s));
        }
        if let Some(i) = times.iter().position(Option::is_none) {
            return Err(Error::Invalid(format!(
                "schedule misses augmented node index {i}"
            )));
        }
        let times: Vec<(f64, f64)> = times.into_iter().map(Option::unwrap).collect();
        let a = p.n_ops();
        let flow_channel = p
            .flows
            .iter()
            .map(|f| {
                let (x, y) = (assignment[f.src], assignment[f.dst]);
                (x != y).then_some((x, y))
            })
            .collect();
        Ok(Schedule {
            op_start: times[..a].iter().map(|t| t.0).collect(),
            op_end: times[..a].iter().map(|t| t.1).collect(),
            flow_start: times[a..].iter().map(|t| t.0).collect(),
            flow_end: times[a..].iter().map(|t| t.1).collect(),
            flow_channel,
            assignment,
        })
    }
}
