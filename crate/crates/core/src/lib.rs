//! Operator coarsening and makespan-optimal placement of DNN operator
//! graphs onto heterogeneous device clusters.
//!
//! The pipeline is: load a [`CompGraph`], coarsen it with [`gcof`], build a
//! [`Problem`] against a [`Cluster`], then place it with [`solve_exact`] or a
//! greedy baseline and check the result with [`simulate`].

#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod bench;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod milp;
pub mod problem;
pub mod profiles;
pub mod schedule;
pub mod simulator;
pub mod solver;

pub use baselines::{greedy_place, BaselineKind};
pub use error::{Error, ModelError, Result, SolveError};
pub use fusion::{gcof, FusionRuleSet};
pub use graph::{CompGraph, DeviceId, FlowEdge, GraphFile, NodeId, OpNode};
pub use milp::{build_model, to_lp_string, MilpModel};
pub use problem::Problem;
pub use profiles::{effective_bandwidth, Cluster, Device, EffectiveMesh, Link};
pub use schedule::{PlacementFile, Schedule};
pub use simulator::{check_feasibility, simulate};
pub use solver::{brute_force, solve_exact, Solution, SolveBudget, SolveStatus};
