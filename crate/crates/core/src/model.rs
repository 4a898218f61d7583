//! Core domain types shared by the workload, scheduling and metrics layers.
//!
//! Time is integer seconds everywhere. Jobs are rigid rectangles of
//! `nodes x time`; there is no placement or topology.

use serde::{Deserialize, Serialize};

/// Seconds since the trace epoch.
pub type Time = u64;
/// A node count.
pub type Nodes = u32;
pub type JobId = u64;

/// Which trace a job came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Capability,
    Capacity,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Capability => "capability",
            Source::Capacity => "capacity",
        }
    }
}

/// Which scheduler queue a job is submitted to.
///
/// `Backfill` jobs never become the reservation head and are never rounded
/// up to the machine's minimum allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueClass {
    Default,
    Backfill,
}

/// One trace record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub arrival_time: Time,
    pub requested_nodes: Nodes,
    /// User-supplied runtime limit.
    pub requested_walltime: Time,
    pub actual_runtime: Time,
    pub source: Source,
    pub queue_class: QueueClass,
}

impl Job {
    pub fn new(
        id: JobId,
        arrival_time: Time,
        requested_nodes: Nodes,
        requested_walltime: Time,
        actual_runtime: Time,
        source: Source,
    ) -> Self {
        Job {
            id,
            arrival_time,
            requested_nodes,
            requested_walltime,
            actual_runtime,
            source,
            queue_class: QueueClass::Default,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.requested_nodes >= 1 && self.requested_walltime > 0 && self.actual_runtime > 0
    }

    /// Runtime as simulated: jobs are killed when they reach their walltime.
    pub fn effective_runtime(&self) -> Time {
        self.actual_runtime.min(self.requested_walltime)
    }
}

/// A homogeneous machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Machine {
    pub total_nodes: Nodes,
    /// Smallest allocation the scheduler hands out. 0 or 1 disables rounding.
    pub min_alloc: Nodes,
}

impl Machine {
    pub fn new(total_nodes: Nodes, min_alloc: Nodes) -> Result<Self, crate::Error> {
        if total_nodes == 0 || min_alloc > total_nodes {
            return Err(crate::Error::InvalidMachine { total_nodes, min_alloc });
        }
        Ok(Machine { total_nodes, min_alloc })
    }

    /// Theta: 4,360 compute nodes after removing the debug partition, 128-node minimum.
    pub const fn capability_reference() -> Self {
        Machine {
            total_nodes: 4_360,
            min_alloc: 128,
        }
    }

    /// Cori KNL partition: 9,688 nodes, single-node jobs allowed.
    pub const fn capacity_reference() -> Self {
        Machine {
            total_nodes: 9_688,
            min_alloc: 1,
        }
    }

    /// Both reference machines combined, without a minimum allocation.
    pub const fn unified_reference() -> Self {
        Machine {
            total_nodes: 4_360 + 9_688,
            min_alloc: 1,
        }
    }

    /// Node-seconds available over `duration`.
    pub fn capacity_over(&self, duration: Time) -> u128 {
        self.total_nodes as u128 * duration as u128
    }
}

/// Rounds a request up to the machine's minimum allocation size.
pub fn min_alloc_round(requested_nodes: Nodes, machine: &Machine) -> Nodes {
    requested_nodes.max(machine.min_alloc)
}

/// One contiguous allocation of nodes to a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationInterval {
    pub job_id: JobId,
    pub start_time: Time,
    pub end_time: Time,
    /// Nodes held, after minimum-allocation rounding.
    pub allocated_nodes: Nodes,
    /// Nodes the job asked for.
    pub used_nodes: Nodes,
    pub queue_class: QueueClass,
}

impl AllocationInterval {
    pub fn duration(&self) -> Time {
        self.end_time - self.start_time
    }

    /// Node-seconds of this interval that fall inside `[from, to)`, using
    /// either the allocated or the used node count.
    pub fn overlap_node_seconds(&self, from: Time, to: Time, allocated: bool) -> u128 {
        let lo = self.start_time.max(from);
        let hi = self.end_time.min(to);
        if hi <= lo {
            return 0;
        }
        let nodes = if allocated {
            self.allocated_nodes
        } else {
            self.used_nodes
        };
        nodes as u128 * (hi - lo) as u128
    }
}

/// Outcome of one job in a simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: JobId,
    pub source: Source,
    pub queue_class: QueueClass,
    pub arrival: Time,
    pub start: Time,
    pub end: Time,
    pub requested_nodes: Nodes,
    pub allocated_nodes: Nodes,
    pub requested_walltime: Time,
    /// Shadow time of the first reservation this job held as queue head.
    pub first_shadow: Option<Time>,
    /// Set when another job took over the reservation while this one was
    /// still waiting. Only possible under priority policies that re-rank.
    pub lost_head: bool,
}

impl JobRecord {
    pub fn wait(&self) -> Time {
        self.start - self.arrival
    }

    pub fn runtime(&self) -> Time {
        self.end - self.start
    }
}

/// A job that could never run on the machine it was submitted to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unschedulable {
    pub id: JobId,
    pub source: Source,
    pub queue_class: QueueClass,
    pub allocation: Nodes,
}

/// Everything a run produced. Metrics are computed from this alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub machine: Machine,
    /// Default-class jobs first, then injected jobs, each in input order.
    pub jobs: Vec<JobRecord>,
    /// Ordered by `(start_time, job_id, queue_class)`.
    pub intervals: Vec<AllocationInterval>,
    pub unschedulable: Vec<Unschedulable>,
    /// First arrival of any scheduled job.
    pub span_start: Time,
    /// Last completion.
    pub span_end: Time,
    /// Last arrival of any scheduled job.
    pub last_arrival: Time,
}

impl SimulationResult {
    pub fn span(&self) -> Time {
        self.span_end - self.span_start
    }

    /// Largest concurrent allocation found by sweeping interval endpoints.
    pub fn peak_allocation(&self) -> u64 {
        let mut points: Vec<(Time, i64)> = Vec::with_capacity(self.intervals.len() * 2);
        for iv in &self.intervals {
            points.push((iv.start_time, iv.allocated_nodes as i64));
            points.push((iv.end_time, -(iv.allocated_nodes as i64)));
        }
        // Releases sort before acquisitions at the same instant.
        points.sort_unstable();
        let mut current = 0i64;
        let mut peak = 0i64;
        for (_, delta) in points {
            current += delta;
            peak = peak.max(current);
        }
        peak as u64
    }
}
