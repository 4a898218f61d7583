//! EASY backfilling.
//!
//! When the queue head does not fit, it gets a reservation: the earliest
//! instant (the shadow time) at which enough running jobs will have hit
//! their walltime to free its allocation, plus the number of nodes that
//! will still be spare at that instant. Other jobs may start now if they
//! fit and either finish by the shadow time or only use spare nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JobId, Nodes, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub job_id: JobId,
    pub shadow_time: Time,
    /// Nodes free at the shadow time beyond the head job's allocation.
    pub extra_nodes: Nodes,
}

/// Computes the head job's reservation.
///
/// `running` yields `(walltime_end, allocated_nodes)` for every running job,
/// sorted by `walltime_end` ascending.
pub fn compute_reservation<I>(
    head_id: JobId,
    head_allocation: Nodes,
    running: I,
    free_now: Nodes,
    total_nodes: Nodes,
    now: Time,
) -> Result<Reservation>
where
    I: IntoIterator<Item = (Time, Nodes)>,
{
    if head_allocation > total_nodes {
        return Err(Error::Unschedulable {
            job: head_id,
            allocation: head_allocation,
            total_nodes,
        });
    }
    if free_now >= head_allocation {
        return Err(Error::NotBlocked {
            job: head_id,
            allocation: head_allocation,
            free: free_now,
        });
    }
    let mut free = free_now;
    let mut shadow: Option<Time> = None;
    for (end, nodes) in running {
        if let Some(t) = shadow {
            // Jobs ending at the same instant as the shadow also release.
            if end > t {
                break;
            }
        }
        free += nodes;
        if shadow.is_none() && free >= head_allocation {
            shadow = Some(end.max(now));
        }
    }
    match shadow {
        Some(shadow_time) => Ok(Reservation {
            job_id: head_id,
            shadow_time,
            extra_nodes: free - head_allocation,
        }),
        // Only reachable if `running` does not cover all busy nodes.
        None => Err(Error::Unschedulable {
            job: head_id,
            allocation: head_allocation,
            total_nodes: free,
        }),
    }
}

/// A job considered for backfilling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub key: usize,
    pub allocation: Nodes,
    pub walltime: Time,
}

/// Decides whether `c` may start now without delaying the reservation, and
/// if so commits it against `free` and the reservation's spare nodes.
pub fn try_backfill(c: &Candidate, reservation: &mut Reservation, free: &mut Nodes, now: Time) -> bool {
    if c.allocation > *free {
        return false;
    }
    let ends_before_shadow = now + c.walltime <= reservation.shadow_time;
    if ends_before_shadow {
        *free -= c.allocation;
        true
    } else if c.allocation <= reservation.extra_nodes {
        *free -= c.allocation;
        reservation.extra_nodes -= c.allocation;
        true
    } else {
        false
    }
}

/// Greedy scan over `candidates` in order. Returns the keys selected.
pub fn backfill_pass<I>(candidates: I, reservation: &mut Reservation, free_now: &mut Nodes, now: Time) -> Vec<usize>
where
    I: IntoIterator<Item = Candidate>,
{
    let mut selected = Vec::new();
    for c in candidates {
        if *free_now == 0 {
            break;
        }
        if try_backfill(&c, reservation, free_now, now) {
            selected.push(c.key);
        }
    }
    selected
}
