use std::path::PathBuf;

use crate::model::{JobId, Nodes};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown trace format `{0}` (expected `swf` or `csv`)")]
    UnknownFormat(String),
    #[error("malformed trace {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("trace {path} contains no valid records ({dropped} dropped)")]
    EmptyTrace { path: PathBuf, dropped: usize },
    #[error("invalid machine: {total_nodes} nodes with minimum allocation {min_alloc}")]
    InvalidMachine { total_nodes: Nodes, min_alloc: Nodes },
    #[error("downsize fraction {0} is outside (0, 100]")]
    InvalidFraction(f64),
    #[error("downsized machine of {total_nodes} nodes is smaller than the minimum allocation {min_alloc}")]
    MachineTooSmall { total_nodes: Nodes, min_alloc: Nodes },
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown policy `{0}` (expected `fcfs` or `wfp`)")]
    UnknownPolicy(String),
    #[error("nothing to simulate: both workloads are empty")]
    EmptySimulation,
    #[error("job {job} needs {allocation} nodes but the machine has {total_nodes}")]
    Unschedulable {
        job: JobId,
        allocation: Nodes,
        total_nodes: Nodes,
    },
    #[error("head job {job} already fits ({free} free, {allocation} needed)")]
    NotBlocked { job: JobId, allocation: Nodes, free: Nodes },
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
