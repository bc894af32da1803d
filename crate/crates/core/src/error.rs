use thiserror::Error;

use crate::fusion::RuleError;
use crate::graph::{DeviceId, GraphError, NodeId};
use crate::profiles::ProfileError;

/// Problems detected while assembling an instance or its MILP.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("operator {op} has no compute time for device {device}")]
    MissingCost { op: NodeId, device: DeviceId },
    #[error("operators need {required} bytes but the cluster holds {available}")]
    InfeasibleMemory { required: u64, available: u64 },
    #[error("graph has no operators")]
    EmptyGraph,
    #[error("cluster and bandwidth mesh disagree on the device set")]
    MeshMismatch,
    #[error("binary variable {var} has non-integral value {value}")]
    NonIntegral { var: String, value: f64 },
    #[error("row {row} violated by {slack}")]
    ConstraintViolated { row: String, slack: f64 },
    #[error("solution does not assign variable {0}")]
    MissingValue(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("device {device} over capacity by {overflow} bytes")]
    MemoryExceeded { device: DeviceId, overflow: u64 },
    #[error("no assignment satisfies the memory constraints")]
    Infeasible,
    #[error("{ops} operators on {devices} devices exceeds the enumeration guard")]
    TooLarge { ops: usize, devices: usize },
    #[error("assignment covers {got} operators, expected {expected}")]
    BadAssignment { expected: usize, got: usize },
}

/// Umbrella error for front ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
