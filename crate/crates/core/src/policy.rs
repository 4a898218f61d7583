//! Queue ordering: first-come first-serve and the WFP utility score.
//!
//! WFP ranks a waiting job by `(wait^2 / walltime^3) * (nodes / machine_nodes)`,
//! favouring jobs that are large or have waited long relative to their
//! requested runtime. Scores are recomputed on every scheduling pass.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{Job, Machine, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Fcfs,
    Wfp,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Wfp => "wfp",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "fcfs" => Ok(PolicyKind::Fcfs),
            "wfp" => Ok(PolicyKind::Wfp),
            _ => Err(Error::UnknownPolicy(s.to_string())),
        }
    }
}

/// WFP priority of `job` at `now`. Zero for a job that has not waited.
pub fn wfp_score(job: &Job, now: Time, machine: &Machine) -> f64 {
    let wait = now.saturating_sub(job.arrival_time) as f64;
    let walltime = job.requested_walltime as f64;
    wfp_score_units(wait, walltime, job.requested_nodes as f64, machine.total_nodes as f64)
}

/// The score formula in any consistent time unit.
pub fn wfp_score_units(wait: f64, walltime: f64, nodes: f64, machine_nodes: f64) -> f64 {
    (wait * wait) / (walltime * walltime * walltime) * (nodes / machine_nodes)
}

/// Compares two WFP scores exactly. Times may be in any common unit; the
/// machine size cancels out. Returns `Greater` when `a` has the higher score.
pub fn wfp_cmp(a: (u64, u64, u64), b: (u64, u64, u64)) -> Ordering {
    let (wait_a, wall_a, nodes_a) = a;
    let (wait_b, wall_b, nodes_b) = b;
    // a > b  <=>  wait_a^2 * nodes_a * wall_b^3 > wait_b^2 * nodes_b * wall_a^3
    let side = |wait: u64, nodes: u64, wall: u64| -> Option<u128> {
        let wait = wait as u128;
        let wall = wall as u128;
        wait.checked_mul(wait)?
            .checked_mul(nodes as u128)?
            .checked_mul(wall)?
            .checked_mul(wall)?
            .checked_mul(wall)
    };
    match (side(wait_a, nodes_a, wall_b), side(wait_b, nodes_b, wall_a)) {
        (Some(lhs), Some(rhs)) => lhs.cmp(&rhs),
        _ => {
            let sa = wfp_score_units(wait_a as f64, wall_a as f64, nodes_a as f64, 1.0);
            let sb = wfp_score_units(wait_b as f64, wall_b as f64, nodes_b as f64, 1.0);
            sa.total_cmp(&sb)
        }
    }
}

fn fcfs_key(j: &Job) -> (Time, u64) {
    (j.arrival_time, j.id)
}

/// Total order used to rank waiting jobs. `Less` means `a` runs first.
pub fn queue_cmp(a: &Job, b: &Job, policy: PolicyKind, now: Time) -> Ordering {
    match policy {
        PolicyKind::Fcfs => fcfs_key(a).cmp(&fcfs_key(b)),
        PolicyKind::Wfp => {
            let key = |j: &Job| {
                (
                    now.saturating_sub(j.arrival_time),
                    j.requested_walltime,
                    j.requested_nodes as u64,
                )
            };
            wfp_cmp(key(b), key(a)).then_with(|| fcfs_key(a).cmp(&fcfs_key(b)))
        }
    }
}

/// Returns the queue in the order the policy would start it.
pub fn order_queue(queue: &[Job], policy: PolicyKind, now: Time, _machine: &Machine) -> Vec<Job> {
    let mut ordered = queue.to_vec();
    ordered.sort_by(|a, b| queue_cmp(a, b, policy, now));
    ordered
}
